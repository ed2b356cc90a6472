//! HTTP service for human labeling sessions.
//!
//! | method | path                          | body / result                         |
//! |--------|-------------------------------|---------------------------------------|
//! | POST   | `/sessions`                   | create from a pool directory          |
//! | GET    | `/sessions/{id}/queue`        | unanswered items of the current batch |
//! | POST   | `/sessions/{id}/labels`       | submit answers                        |
//! | GET    | `/sessions/{id}/progress`     | counts, loop state, learning curve    |
//! | GET    | `/sessions/{id}/classes`      | class names in label order            |
//! | GET    | `/sessions/{id}/curve.csv`    | learning curve as CSV                 |
//! | GET    | `/crops/{crop_id}.png`        | crop image                            |
//!
//! Reads are served from a snapshot, so they return immediately while a
//! completed batch is being committed and the models retrained.

mod state;

use std::path::PathBuf;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use trapal_core::pooldir::load_pool_dir;
use trapal_core::session::store::DurableSession;
use trapal_core::session::{AnswerStatus, CurvePoint, SessionError};
use trapal_core::{LoopConfig, Session};

pub use state::{AppState, LoopState, ServerConfig};
use state::{is_safe_name, is_safe_relative, SessionSlot};

/// Scalar type of served sessions.
pub type Real = f32;

/// Error response: a status code and a JSON body `{"error": ...}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/queue", get(queue))
        .route("/sessions/{id}/labels", post(submit_labels))
        .route("/sessions/{id}/progress", get(progress))
        .route("/sessions/{id}/classes", get(classes))
        .route("/sessions/{id}/curve.csv", get(curve_csv))
        .route("/crops/{file}", get(crop_image))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub id: Option<String>,
    /// Pool directory relative to the configured pools root.
    pub pool: PathBuf,
    pub config: Option<LoopConfig>,
    /// Overrides `classes.txt` of the pool directory.
    pub classes: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub id: String,
    pub classes: Vec<String>,
    pub pool_size: usize,
    pub batch_id: Option<u64>,
}

async fn create_session(State(app): State<AppState>, Json(req): Json<CreateRequest>) -> ApiResult<Response> {
    let id = match req.id {
        Some(id) if is_safe_name(&id) => id,
        Some(id) => return Err(ApiError::bad_request(format!("invalid session id {id:?}"))),
        None => app.fresh_id(),
    };
    if !is_safe_relative(&req.pool) {
        return Err(ApiError::bad_request(format!("pool path {:?} must be relative without '..'", req.pool)));
    }
    if app.get(&id).await.is_ok() {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("session {id:?} already exists")));
    }
    let pool_dir = app.config.pools_root.join(&req.pool);
    let dir = app.session_dir(&id);
    let config = req.config.unwrap_or_default();
    let override_classes = req.classes;
    let durable = tokio::task::spawn_blocking(move || -> ApiResult<DurableSession<Real>> {
        let data = load_pool_dir::<Real>(&pool_dir).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let classes = override_classes
            .or_else(|| data.classes.clone())
            .ok_or_else(|| ApiError::bad_request("no classes given and the pool has no classes.txt"))?;
        let holdout = if data.holdout_labels.is_empty() {
            None
        } else {
            data.labeled_holdout(&classes, &data.holdout_labels).map_err(|e| ApiError::bad_request(e.to_string()))?
        };
        let embedding = data.embedding_or_identity();
        let session = Session::new(data.pool, holdout, classes, config, embedding)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        let mut durable = DurableSession::create(&dir, session).map_err(|e| match e {
            SessionError::Config(m) => ApiError::new(StatusCode::CONFLICT, m),
            other => ApiError::internal(other),
        })?;
        durable.issue().map_err(ApiError::internal)?;
        Ok(durable)
    })
    .await
    .map_err(ApiError::internal)??;
    let body = CreateResponse {
        id: id.clone(),
        classes: durable.session().classes().to_vec(),
        pool_size: durable.session().state().pool.len(),
        batch_id: durable.session().pending().map(|p| p.batch_id),
    };
    app.insert(id, Arc::new(SessionSlot::new(durable)));
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct QueueItem {
    pub crop_id: String,
    pub image: String,
    pub batch_id: u64,
    pub issued_at: u64,
}

async fn queue(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<QueueItem>>> {
    let slot = app.get(&id).await?;
    let snap = slot.snapshot();
    if slot.state(&snap) != LoopState::AwaitingLabels {
        return Ok(Json(Vec::new()));
    }
    let Some(batch_id) = snap.batch_id else { return Ok(Json(Vec::new())) };
    Ok(Json(
        snap.unanswered
            .iter()
            .map(|c| QueueItem {
                crop_id: c.clone(),
                image: format!("/crops/{c}.png"),
                batch_id,
                issued_at: snap.issued_at,
            })
            .collect(),
    ))
}

/// A class given by index or by name.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Index(usize),
    Name(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub crop_id: String,
    pub label: LabelValue,
    pub submitter: Option<String>,
    /// When present, must name the pending batch.
    pub batch_id: Option<u64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Accepted,
    Duplicate,
    Conflict,
    Rejected,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ItemResult {
    pub crop_id: String,
    pub status: ItemStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelsResponse {
    pub accepted: usize,
    pub results: Vec<ItemResult>,
    pub state: LoopState,
}

fn apply_one(d: &mut DurableSession<Real>, item: &LabelSubmission) -> ItemResult {
    let result = |status, error: Option<String>| ItemResult { crop_id: item.crop_id.clone(), status, error };
    let s = d.session();
    let Some(index) = s.index_of(&item.crop_id) else {
        return result(ItemStatus::Rejected, Some(format!("unknown crop {:?}", item.crop_id)));
    };
    let label = match &item.label {
        LabelValue::Index(i) => *i,
        LabelValue::Name(n) => match s.class_index(n) {
            Ok(i) => i,
            Err(e) => return result(ItemStatus::Rejected, Some(e.to_string())),
        },
    };
    if let Some(existing) = s.committed_label(index) {
        return if existing == label {
            result(ItemStatus::Duplicate, None)
        } else {
            result(ItemStatus::Conflict, Some(format!("already labeled {}", s.classes()[existing])))
        };
    }
    let pending = s.pending().map(|p| p.batch_id);
    if let (Some(given), Some(current)) = (item.batch_id, pending) {
        if given != current {
            return result(ItemStatus::Rejected, Some(format!("batch {given} is not the pending batch {current}")));
        }
    }
    let kind = item.submitter.as_deref().unwrap_or("human");
    match d.answer(index, label, kind) {
        Ok(AnswerStatus::Accepted) => result(ItemStatus::Accepted, None),
        Ok(AnswerStatus::Duplicate) => result(ItemStatus::Duplicate, None),
        Err(e @ SessionError::Conflict { .. }) => result(ItemStatus::Conflict, Some(e.to_string())),
        Err(e) => result(ItemStatus::Rejected, Some(e.to_string())),
    }
}

/// Commits the complete batch, issues the next one unless the budget is
/// spent, and clears the training flag.
fn commit_and_issue(slot: &SessionSlot) {
    let mut d = slot.durable.lock().expect("session lock");
    let outcome = d.commit().and_then(|_| if d.session().is_done() { Ok(()) } else { d.issue().map(|_| ()) });
    slot.refresh(&d, outcome.err().map(|e| e.to_string()));
    slot.training.store(false, Ordering::SeqCst);
}

async fn submit_labels(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(items): Json<Vec<LabelSubmission>>,
) -> ApiResult<Response> {
    let slot = app.get(&id).await?;
    if slot.training.load(Ordering::SeqCst) {
        return Err(ApiError::new(StatusCode::CONFLICT, "the last batch is being committed; retry shortly"));
    }
    let worker = slot.clone();
    let (results, start_commit) = tokio::task::spawn_blocking(move || {
        let mut d = worker.durable.lock().expect("session lock");
        let results: Vec<ItemResult> = items.iter().map(|item| apply_one(&mut d, item)).collect();
        let complete = d.session().pending().is_some_and(|p| p.is_complete());
        let start_commit =
            complete && worker.training.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_ok();
        worker.refresh(&d, None);
        (results, start_commit)
    })
    .await
    .map_err(ApiError::internal)?;
    if start_commit {
        let worker = slot.clone();
        tokio::task::spawn_blocking(move || commit_and_issue(&worker));
    }
    let accepted = results.iter().filter(|r| r.status == ItemStatus::Accepted).count();
    let conflict = results.iter().any(|r| r.status == ItemStatus::Conflict);
    let state = slot.state(&slot.snapshot());
    let status = if conflict { StatusCode::CONFLICT } else { StatusCode::OK };
    Ok((status, Json(LabelsResponse { accepted, results, state })).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Progress {
    pub labels_acquired: usize,
    pub step: u64,
    pub budget: usize,
    pub state: LoopState,
    pub curve: Vec<CurvePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

async fn progress(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Progress>> {
    let slot = app.get(&id).await?;
    let snap = slot.snapshot();
    let state = slot.state(&snap);
    Ok(Json(Progress {
        labels_acquired: snap.labels_acquired,
        step: snap.step,
        budget: snap.budget,
        state,
        curve: snap.curve,
        error: snap.last_error,
    }))
}

async fn classes(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<String>>> {
    Ok(Json(app.get(&id).await?.snapshot().classes))
}

async fn curve_csv(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let snap = app.get(&id).await?.snapshot();
    let csv = trapal_core::session::LearningCurve { points: snap.curve }.to_csv();
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

async fn crop_image(State(app): State<AppState>, Path(file): Path<String>) -> ApiResult<Response> {
    let crop_id = file.strip_suffix(".png").filter(|c| is_safe_name(c));
    let Some(crop_id) = crop_id else {
        return Err(ApiError::not_found(format!("no crop {file:?}")));
    };
    let path = app.config.crops_root.join(format!("{crop_id}.png"));
    match tokio::fs::read(&path).await {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ApiError::not_found(format!("no crop {crop_id:?}"))),
        Err(e) => Err(ApiError::internal(e)),
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(config: ServerConfig, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(config))).await
}
