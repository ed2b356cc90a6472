use serde::{Deserialize, Serialize};

use super::{Session, SessionError, SessionState};
use crate::scalar::Scalar;

pub const SESSION_FORMAT: &str = "trapal-session";
pub const SESSION_VERSION: u32 = 1;

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    scalar: String,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Envelope<T> {
    format: String,
    version: u32,
    scalar: String,
    state: SessionState<T>,
}

/// Serializes the full session state, including the pool, the pending batch
/// and both models.
pub fn save_session<T: Scalar>(session: &Session<T>) -> Vec<u8> {
    let mut state = session.state.clone();
    state.elapsed_s = session.elapsed_for_save();
    let env = Envelope { format: SESSION_FORMAT.into(), version: SESSION_VERSION, scalar: T::type_tag().into(), state };
    serde_json::to_vec(&env).expect("session state serializes")
}

/// Inverse of [`save_session`]. Rejects other formats, versions and scalar
/// types, truncated input and states that violate the session invariants.
pub fn load_session<T: Scalar>(bytes: &[u8]) -> Result<Session<T>, SessionError> {
    let header: Header = serde_json::from_slice(bytes).map_err(|e| SessionError::Format(e.to_string()))?;
    if header.format != SESSION_FORMAT {
        return Err(SessionError::Format(format!("not a session file (format {:?})", header.format)));
    }
    if header.version != SESSION_VERSION {
        return Err(SessionError::Format(format!(
            "unsupported version {} (expected {SESSION_VERSION})",
            header.version
        )));
    }
    if header.scalar != T::type_tag() {
        return Err(SessionError::Format(format!("stored as {}, loading as {}", header.scalar, T::type_tag())));
    }
    let env: Envelope<T> = serde_json::from_slice(bytes).map_err(|e| SessionError::Format(e.to_string()))?;
    Session::from_state(env.state)
}
