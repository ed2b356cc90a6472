use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use trapal_core::session::store::{DurableSession, STATE_FILE};
use trapal_core::session::CurvePoint;

use crate::{ApiError, Real};

/// Directories the service reads and writes.
#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// One subdirectory per session.
    pub sessions_root: PathBuf,
    /// Crop images, served as `<crops_root>/<crop_id>.png`.
    pub crops_root: PathBuf,
    /// Pool directories named in create requests resolve below this.
    pub pools_root: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopState {
    AwaitingLabels,
    Training,
    Done,
}

/// Read-side copy of a session, refreshed after every mutation so that reads
/// never wait for a retrain.
#[derive(Clone, Debug, Default)]
pub(crate) struct Snapshot {
    pub labels_acquired: usize,
    pub step: u64,
    pub budget: usize,
    pub done: bool,
    pub batch_id: Option<u64>,
    pub issued_at: u64,
    pub unanswered: Vec<String>,
    pub classes: Vec<String>,
    pub curve: Vec<CurvePoint>,
    pub last_error: Option<String>,
}

impl Snapshot {
    pub fn of(d: &DurableSession<Real>, last_error: Option<String>) -> Self {
        let s = d.session();
        let pending = s.pending();
        Self {
            labels_acquired: s.labels_acquired(),
            step: s.step_count(),
            budget: s.config().budget,
            done: s.is_done(),
            batch_id: pending.map(|p| p.batch_id),
            issued_at: pending.map_or(0, |p| p.issued_at),
            unanswered: pending.map(|p| p.unanswered().map(|i| s.crop_id(i).to_owned()).collect()).unwrap_or_default(),
            classes: s.classes().to_vec(),
            curve: s.curve().points.clone(),
            last_error,
        }
    }
}

pub(crate) struct SessionSlot {
    pub durable: Mutex<DurableSession<Real>>,
    pub snapshot: Mutex<Snapshot>,
    pub training: AtomicBool,
}

impl SessionSlot {
    pub fn new(durable: DurableSession<Real>) -> Self {
        let snapshot = Snapshot::of(&durable, None);
        Self { durable: Mutex::new(durable), snapshot: Mutex::new(snapshot), training: AtomicBool::new(false) }
    }

    pub fn snapshot(&self) -> Snapshot {
        self.snapshot.lock().expect("snapshot lock").clone()
    }

    pub fn refresh(&self, d: &DurableSession<Real>, last_error: Option<String>) {
        *self.snapshot.lock().expect("snapshot lock") = Snapshot::of(d, last_error);
    }

    pub fn state(&self, snap: &Snapshot) -> LoopState {
        if self.training.load(Ordering::SeqCst) {
            LoopState::Training
        } else if snap.done {
            LoopState::Done
        } else {
            LoopState::AwaitingLabels
        }
    }
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    pub(crate) config: Arc<ServerConfig>,
    sessions: Arc<Mutex<HashMap<String, Arc<SessionSlot>>>>,
    counter: Arc<AtomicU64>,
}

/// Letters, digits, `-`, `_` and inner dots; never a path separator or `..`.
pub(crate) fn is_safe_name(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 200
        && !id.starts_with('.')
        && !id.contains("..")
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Relative path without `..`, root or prefix components.
pub(crate) fn is_safe_relative(p: &Path) -> bool {
    p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) && p.components().next().is_some()
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        Self { config: Arc::new(config), sessions: Arc::default(), counter: Arc::default() }
    }

    pub(crate) fn fresh_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let millis = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        format!("s{millis}-{n}")
    }

    pub(crate) fn session_dir(&self, id: &str) -> PathBuf {
        self.config.sessions_root.join(id)
    }

    pub(crate) fn insert(&self, id: String, slot: Arc<SessionSlot>) {
        self.sessions.lock().expect("registry lock").insert(id, slot);
    }

    /// Returns a loaded session, opening it from disk on first use.
    pub(crate) async fn get(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        if !is_safe_name(id) {
            return Err(ApiError::not_found(format!("no session {id:?}")));
        }
        if let Some(slot) = self.sessions.lock().expect("registry lock").get(id) {
            return Ok(slot.clone());
        }
        let dir = self.session_dir(id);
        if !dir.join(STATE_FILE).exists() {
            return Err(ApiError::not_found(format!("no session {id:?}")));
        }
        let durable = tokio::task::spawn_blocking(move || DurableSession::<Real>::open(&dir))
            .await
            .map_err(ApiError::internal)?
            .map_err(ApiError::internal)?;
        let mut map = self.sessions.lock().expect("registry lock");
        Ok(map.entry(id.to_owned()).or_insert_with(|| Arc::new(SessionSlot::new(durable))).clone())
    }
}
