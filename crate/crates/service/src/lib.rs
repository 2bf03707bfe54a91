//! HTTP service for scoring posts and working the review queue.
//!
//! Endpoints (JSON over HTTP):
//!
//! | method | path                 | purpose                                  |
//! |--------|----------------------|------------------------------------------|
//! | POST   | `/api/score`         | score one post record                    |
//! | GET    | `/api/queue`         | one page of the ranked queue             |
//! | POST   | `/api/verdict`       | record a reviewer verdict                |
//! | GET    | `/api/export/labels` | reviewed posts as training labels        |
//! | GET    | `/api/health`        | liveness, model and queue status         |
//!
//! Verdicts are appended to `verdicts.jsonl` in the data directory and
//! synced to disk before the request is acknowledged; on startup the log is
//! replayed over the loaded queue. All mutations go through one writer lock.

mod verdict_log;

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ledgerscope::features::Featurizer;
use ledgerscope::fusion::FusionModel;
use ledgerscope::record::parse_post_line;
use ledgerscope::triage::{QueueEntry, ReviewStatus, TriageQueue, Verdict};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::Mutex;

pub use verdict_log::{VerdictLog, VerdictRecord, LOG_FILE};

pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 500;

pub struct ServiceConfig {
    /// Holds the verdict log.
    pub data_dir: PathBuf,
    /// Required as `Authorization: Bearer <token>` on every endpoint but
    /// health, when set.
    pub token: Option<String>,
    pub featurizer: Featurizer,
}

pub struct AppState {
    queue: RwLock<TriageQueue>,
    writer: Mutex<VerdictLog>,
    model: RwLock<Option<Arc<FusionModel>>>,
    featurizer: Featurizer,
    token: Option<String>,
}

impl AppState {
    /// Load the queue, replay the verdict log over it, and install the model.
    pub fn open(config: ServiceConfig, mut queue: TriageQueue, model: Option<FusionModel>) -> io::Result<Self> {
        let (log, records) = VerdictLog::open(&config.data_dir)?;
        let mut replayed = 0;
        for r in &records {
            match queue.apply_verdict(&r.post_id, r.verdict, &r.reviewer, r.timestamp, true) {
                Ok(_) => replayed += 1,
                Err(e) => log::warn!("skipping logged verdict: {e}"),
            }
        }
        log::info!("replayed {replayed} of {} logged verdicts from {}", records.len(), log.path().display());
        Ok(Self {
            queue: RwLock::new(queue),
            writer: Mutex::new(log),
            model: RwLock::new(model.map(Arc::new)),
            featurizer: config.featurizer,
            token: config.token,
        })
    }

    /// Replace the scoring model; in-flight requests keep the old one.
    pub fn swap_model(&self, model: Option<FusionModel>) {
        *self.model.write().expect("model lock poisoned") = model.map(Arc::new);
    }

    pub fn model(&self) -> Option<Arc<FusionModel>> {
        self.model.read().expect("model lock poisoned").clone()
    }

    pub fn queue_snapshot(&self) -> TriageQueue {
        self.queue.read().expect("queue lock poisoned").clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    pub queue_len: usize,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model_loaded: state.model().is_some(),
        queue_len: state.queue.read().expect("queue lock poisoned").len(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub score: f64,
    pub flag: bool,
}

async fn score(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<ScoreResponse> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let parsed = parse_post_line(text).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let model = state
        .model()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"))?;
    let worker = Arc::clone(&state);
    let prediction = tokio::task::spawn_blocking(move || {
        let bundle = worker.featurizer.featurize(&parsed.post)?;
        model.predict(&bundle, model.config.threshold)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(Json(ScoreResponse { score: prediction.score, flag: prediction.flag }))
}

#[derive(Debug, Deserialize)]
struct PageParams {
    page: Option<usize>,
    size: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueuePage {
    pub page: usize,
    pub size: usize,
    pub total: usize,
    pub entries: Vec<QueueEntry>,
}

async fn queue_page(State(state): State<Arc<AppState>>, Query(p): Query<PageParams>) -> ApiResult<QueuePage> {
    let page = p.page.unwrap_or(0);
    let size = p.size.unwrap_or(DEFAULT_PAGE_SIZE);
    if size == 0 || size > MAX_PAGE_SIZE {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("size must be in 1..={MAX_PAGE_SIZE}")));
    }
    let queue = state.queue.read().expect("queue lock poisoned");
    let entries = queue
        .page(page, size)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("page {page} is past the end of the queue")))?;
    Ok(Json(QueuePage { page, size, total: queue.len(), entries: entries.to_vec() }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub post_id: String,
    pub verdict: Verdict,
    pub reviewer: String,
    /// Unix seconds; the server clock when omitted.
    #[serde(default)]
    pub timestamp: Option<i64>,
    /// Allow overwriting an earlier verdict.
    #[serde(default)]
    pub force: bool,
}

fn now() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs() as i64)
}

async fn verdict(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<QueueEntry> {
    let req: VerdictRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    if req.reviewer.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "reviewer must not be empty"));
    }
    let mut log = state.writer.lock().await;
    {
        let queue = state.queue.read().expect("queue lock poisoned");
        let entry = queue
            .get(&req.post_id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("post {} is not in the queue", req.post_id)))?;
        if entry.status != ReviewStatus::Pending && !req.force {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("post {} already reviewed as {:?}; resend with force to change it", req.post_id, entry.status),
            ));
        }
    }
    let record = VerdictRecord {
        post_id: req.post_id,
        verdict: req.verdict,
        reviewer: req.reviewer,
        timestamp: req.timestamp.unwrap_or_else(now),
    };
    log.append(&record)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("verdict log: {e}")))?;
    let mut queue = state.queue.write().expect("queue lock poisoned");
    let entry = queue
        .apply_verdict(&record.post_id, record.verdict, &record.reviewer, record.timestamp, true)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(entry.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedLabel {
    pub post_id: String,
    pub hidden_economy: bool,
    pub status: ReviewStatus,
    pub reviewer: Option<String>,
    pub reviewed_at: Option<i64>,
}

async fn export_labels(State(state): State<Arc<AppState>>) -> Json<Vec<ExportedLabel>> {
    let queue = state.queue.read().expect("queue lock poisoned");
    let labels = queue
        .entries()
        .iter()
        .filter(|e| e.status != ReviewStatus::Pending)
        .map(|e| ExportedLabel {
            post_id: e.post_id.clone(),
            hidden_economy: e.status == ReviewStatus::ConfirmedEvasion,
            status: e.status,
            reviewer: e.reviewer.clone(),
            reviewed_at: e.reviewed_at,
        })
        .collect();
    Json(labels)
}

fn tokens_match(given: &[u8], expected: &[u8]) -> bool {
    given.len() == expected.len() && given.iter().zip(expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if !given.is_some_and(|g| tokens_match(g.as_bytes(), token.as_bytes())) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Arc<AppState>) -> Router {
    let protected = Router::new()
        .route("/api/score", post(score))
        .route("/api/queue", get(queue_page))
        .route("/api/verdict", post(verdict))
        .route("/api/export/labels", get(export_labels))
        .route_layer(middleware::from_fn_with_state(Arc::clone(&state), require_token));
    Router::new().route("/api/health", get(health)).merge(protected).with_state(state)
}

/// Serve until Ctrl-C.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> io::Result<()> {
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    log::info!("listening on {}", addr.map_or_else(|| "?".into(), |a| a.to_string()));
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
