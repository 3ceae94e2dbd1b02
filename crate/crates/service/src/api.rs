use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use activelabel::corpus::Label;
use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tower_http::services::ServeDir;

use crate::session::{
    CorpusEntry, CreateSession, MetricsReport, Session, SessionError, SessionEvent, SessionStatus,
};
use crate::store::EventStore;

pub const REMAINING_HEADER: &str = "x-pool-remaining";
pub const EXHAUSTED_HEADER: &str = "x-pool-exhausted";

/// Error body of every failed request.
#[derive(Debug, Serialize, serde::Deserialize, PartialEq, Eq)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_owned(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::UnknownSession(_) => (StatusCode::NOT_FOUND, "not_found"),
            SessionError::Conflict { .. } => (StatusCode::CONFLICT, "conflict"),
            SessionError::Exhausted => (StatusCode::CONFLICT, "pool_exhausted"),
            SessionError::LabelMismatch { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "label_mismatch"),
            SessionError::UnknownCorpus(_)
            | SessionError::EmptyCorpus(_)
            | SessionError::UnknownDocument(_)
            | SessionError::NoSeeds
            | SessionError::InvalidRequest(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            SessionError::Sampling(activelabel::sampling::SamplingError::InvalidBatchSize(_))
            | SessionError::Sampling(activelabel::sampling::SamplingError::Classifier(
                activelabel::classifier::ClassifierError::InvalidFraction(_)
                | activelabel::classifier::ClassifierError::InvalidLoss(_),
            )) => (StatusCode::BAD_REQUEST, "invalid_request"),
            SessionError::Sampling(_) | SessionError::Replay(_) | SessionError::Io(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError::new(status, code, e.to_string())
    }
}

fn parse_json<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", format!("malformed body: {e}")))
}

/// A session plus the last published metrics. Mutations are serialized by
/// the mutex; metrics are read from the published copy, so they never wait
/// for training and always see a consistent state.
struct SessionHandle {
    session: Mutex<Session>,
    published: RwLock<Arc<MetricsReport>>,
}

impl SessionHandle {
    fn new(session: Session) -> Self {
        let metrics = Arc::new(session.metrics());
        Self {
            session: Mutex::new(session),
            published: RwLock::new(metrics),
        }
    }

    fn publish(&self, metrics: MetricsReport) {
        *self.published.write().expect("metrics lock") = Arc::new(metrics);
    }

    fn metrics(&self) -> Arc<MetricsReport> {
        Arc::clone(&self.published.read().expect("metrics lock"))
    }
}

pub struct ServiceConfig {
    pub corpora: HashMap<String, CorpusEntry>,
    /// When set, every `/v1` request except health needs
    /// `Authorization: Bearer <token>`.
    pub token: Option<String>,
    pub store: EventStore,
    /// Static files served at `/`, typically the labeling UI.
    pub ui_dir: Option<PathBuf>,
}

pub struct AppState {
    corpora: HashMap<String, CorpusEntry>,
    token: Option<String>,
    store: EventStore,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

impl AppState {
    /// Builds the state and replays every stored session log.
    pub fn new(config: &ServiceConfig) -> Result<Arc<Self>, SessionError> {
        let mut sessions = HashMap::new();
        for (id, events) in config.store.load()? {
            let session = Session::replay(&events, &config.corpora)
                .map_err(|e| SessionError::Replay(format!("session {id}: {e}")))?;
            sessions.insert(id, Arc::new(SessionHandle::new(session)));
        }
        Ok(Arc::new(Self {
            corpora: config.corpora.clone(),
            token: config.token.clone(),
            store: config.store.clone(),
            sessions: RwLock::new(sessions),
        }))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("sessions lock").len()
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_owned()).into())
    }
}

/// Runs CPU-bound session work off the async runtime.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let request: CreateSession = parse_json(&body)?;
    let id = blocking(move || {
        let corpus = state
            .corpora
            .get(&request.corpus)
            .ok_or_else(|| SessionError::UnknownCorpus(request.corpus.clone()))?;
        let id = loop {
            let id = format!("{:016x}", rand::random::<u64>());
            if !state.sessions.read().expect("sessions lock").contains_key(&id) {
                break id;
            }
        };
        let session = Session::create(id.clone(), corpus, request.clone())?;
        state
            .store
            .append(&id, &SessionEvent::Created { session_id: id.clone(), request })
            .map_err(SessionError::from)?;
        state
            .sessions
            .write()
            .expect("sessions lock")
            .insert(id.clone(), Arc::new(SessionHandle::new(session)));
        Ok(id)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "session_id": id }))).into_response())
}

#[derive(Serialize)]
struct SessionSummary {
    session_id: String,
    status: SessionStatus,
    labeled: usize,
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Vec<SessionSummary>> {
    let handles: Vec<Arc<SessionHandle>> = state.sessions.read().expect("sessions lock").values().cloned().collect();
    let mut out: Vec<SessionSummary> = handles
        .iter()
        .map(|h| {
            let m = h.metrics();
            SessionSummary {
                session_id: m.session_id.clone(),
                status: m.status,
                labeled: m.labeled,
            }
        })
        .collect();
    out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    Json(out)
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let handle = state.handle(&id)?;
    let view = blocking(move || Ok(handle.session.lock().expect("session lock").view())).await?;
    Ok(Json(view).into_response())
}

async fn next_batch(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let handle = state.handle(&id)?;
    let (items, remaining) = blocking(move || {
        let mut session = handle.session.lock().expect("session lock");
        let batch = session.propose_batch()?;
        let doc_ids = batch.iter().map(|p| p.doc_id.clone()).collect();
        state
            .store
            .append(&id, &SessionEvent::BatchIssued { doc_ids })
            .map_err(SessionError::from)?;
        session.issue_batch(batch);
        handle.publish(session.metrics());
        Ok((session.pending_items(), session.remaining_after_pending()))
    })
    .await?;
    let mut headers = HeaderMap::new();
    headers.insert(REMAINING_HEADER, HeaderValue::from(remaining));
    headers.insert(
        EXHAUSTED_HEADER,
        HeaderValue::from_static(if remaining == 0 { "true" } else { "false" }),
    );
    Ok((headers, Json(items)).into_response())
}

async fn submit_labels(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let labels: BTreeMap<String, Label> = parse_json(&body)?;
    let handle = state.handle(&id)?;
    let summary = blocking(move || {
        let mut session = handle.session.lock().expect("session lock");
        session.check_labels(&labels)?;
        state
            .store
            .append(&id, &SessionEvent::LabelsReceived { labels: labels.clone() })
            .map_err(SessionError::from)?;
        let mut training = (*handle.metrics()).clone();
        training.status = SessionStatus::Training;
        handle.publish(training);
        let result = session.apply_labels(&labels);
        handle.publish(session.metrics());
        Ok(result?)
    })
    .await?;
    Ok(Json(summary).into_response())
}

async fn metrics(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let report = state.handle(&id)?.metrics();
    Ok(Json(&*report).into_response())
}

async fn export_classifier(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let handle = state.handle(&id)?;
    let json = blocking(move || Ok(handle.session.lock().expect("session lock").export())).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], json).into_response())
}

async fn require_token(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(request).await
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/batch", post(next_batch))
        .route("/v1/sessions/{id}/labels", post(submit_labels))
        .route("/v1/sessions/{id}/metrics", get(metrics))
        .route("/v1/sessions/{id}/classifier", get(export_classifier))
        .route_layer(middleware::from_fn_with_state(Arc::clone(&state), require_token))
        .route("/v1/health", get(health))
        .route("/v1", get(not_found))
        .route("/v1/{*rest}", get(not_found).post(not_found))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.fallback(not_found),
    }
}
