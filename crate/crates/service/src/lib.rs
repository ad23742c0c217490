//! HTTP API for interactive labelling sessions.
//!
//! A session warms up a scorer on a server-side dataset, exposes the
//! selected queries as pending items, collects the expert's labels, and
//! then estimates the contamination ratio and trains in the background.
//!
//! | method | path | |
//! |---|---|---|
//! | `POST` | `/sessions` | create a session |
//! | `GET` | `/sessions/{id}` | session state and result |
//! | `GET` | `/sessions/{id}/pending` | queries still awaiting a label |
//! | `POST` | `/sessions/{id}/labels` | submit labels |
//! | `GET` | `/healthz` | liveness |
//!
//! Errors are JSON objects `{code, message}`.

mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use soel_core::eval::evaluate;
use soel_core::training::QueryStage;
use soel_core::{prepare, Metric, OracleHandle, QueryPlan, SplitResult, TrainConfig};

pub use session::{PendingItem, Session, SessionResult, SessionState, SessionStore};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Conflict(String),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request"),
            ApiError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
        };
        let body = ErrorBody {
            code: code.into(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::Invalid(r.body_text())
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateSession {
    pub dataset: String,
    pub plan: QueryPlan,
    pub train: TrainConfig,
    /// Wait for an explicit `finalize` before training.
    #[serde(default)]
    pub require_finalize: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LabelEntry {
    pub index: usize,
    pub label: u8,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SubmitLabels {
    #[serde(default)]
    pub labels: Vec<LabelEntry>,
    #[serde(default)]
    pub finalize: bool,
}

struct Slot {
    session: Session,
    stage: Option<QueryStage>,
}

type SlotRef = Arc<Mutex<Slot>>;

struct Inner {
    datasets: HashMap<String, Arc<SplitResult>>,
    sessions: Mutex<HashMap<String, SlotRef>>,
    store: SessionStore,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// `datasets` maps the names clients may reference to prepared splits.
    pub fn new(
        datasets: HashMap<String, SplitResult>,
        store: SessionStore,
    ) -> std::io::Result<Self> {
        let state = AppState {
            inner: Arc::new(Inner {
                datasets: datasets
                    .into_iter()
                    .map(|(k, v)| (k, Arc::new(v)))
                    .collect(),
                sessions: Mutex::new(HashMap::new()),
                store,
            }),
        };
        for session in state.inner.store.load_all()? {
            let id = session.id.clone();
            let slot = Arc::new(Mutex::new(Slot {
                session,
                stage: None,
            }));
            state.inner.sessions.lock().unwrap().insert(id, slot);
        }
        Ok(state)
    }

    /// Re-runs the deterministic warm-up of every unfinished session loaded
    /// from disk. Must be called inside a Tokio runtime.
    pub fn resume(&self) {
        let slots: Vec<SlotRef> = self
            .inner
            .sessions
            .lock()
            .unwrap()
            .values()
            .cloned()
            .collect();
        for slot in slots {
            let unfinished = !slot.lock().unwrap().session.state.is_terminal();
            if unfinished {
                tokio::spawn(warm_up(self.clone(), slot));
            }
        }
    }

    fn slot(&self, id: &str) -> Result<SlotRef, ApiError> {
        self.inner
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session {id}")))
    }

    fn dataset(&self, name: &str) -> Option<Arc<SplitResult>> {
        self.inner.datasets.get(name).cloned()
    }

    fn persist(&self, session: &Session) {
        self.inner.store.save(session);
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/pending", get(get_pending))
        .route("/sessions/{id}/labels", post(post_labels))
        .with_state(state)
}

/// Serves the API until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    state.resume();
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Session>), ApiError> {
    let Json(req) = body?;
    let split = state
        .dataset(&req.dataset)
        .ok_or_else(|| ApiError::NotFound(format!("no dataset {:?}", req.dataset)))?;
    req.plan
        .validate(split.train.len())
        .map_err(|e| ApiError::Invalid(e.to_string()))?;
    req.train
        .validate()
        .map_err(|e| ApiError::Invalid(e.to_string()))?;

    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::new(
        id.clone(),
        req.dataset,
        req.plan,
        req.train,
        req.require_finalize,
    );
    state.persist(&session);
    let slot = Arc::new(Mutex::new(Slot {
        session: session.clone(),
        stage: None,
    }));
    state
        .inner
        .sessions
        .lock()
        .unwrap()
        .insert(id, slot.clone());
    tokio::spawn(warm_up(state, slot));
    Ok((StatusCode::CREATED, Json(session)))
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Session>, ApiError> {
    let slot = state.slot(&id)?;
    let session = slot.lock().unwrap().session.clone();
    Ok(Json(session))
}

async fn get_pending(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Vec<PendingItem>>, ApiError> {
    let slot = state.slot(&id)?;
    let pending = slot.lock().unwrap().session.pending.clone();
    Ok(Json(pending))
}

async fn post_labels(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SubmitLabels>, JsonRejection>,
) -> Result<Json<Session>, ApiError> {
    let Json(req) = body?;
    let slot = state.slot(&id)?;
    let (snapshot, start) = {
        let mut guard = slot.lock().unwrap();
        let s = &mut guard.session;
        if s.state != SessionState::AwaitingLabels {
            return Err(ApiError::Conflict(format!(
                "session is {:?}, not awaiting labels",
                s.state
            )));
        }
        for e in &req.labels {
            if e.label > 1 {
                return Err(ApiError::Invalid(format!(
                    "label {} is not 0 or 1",
                    e.label
                )));
            }
            if !s.queries.contains(&e.index) {
                return Err(ApiError::Invalid(format!(
                    "index {} was not queried",
                    e.index
                )));
            }
            if let Some(&prev) = s.received.get(&e.index) {
                if prev != e.label {
                    return Err(ApiError::Conflict(format!(
                        "index {} already labelled {prev}",
                        e.index
                    )));
                }
            }
        }
        let mut batch = std::collections::BTreeMap::new();
        for e in &req.labels {
            if let Some(&prev) = batch.get(&e.index) {
                if prev != e.label {
                    return Err(ApiError::Conflict(format!(
                        "index {} labelled twice",
                        e.index
                    )));
                }
            }
            batch.insert(e.index, e.label);
        }
        for (i, y) in batch {
            s.received.insert(i, y);
        }
        s.pending.retain(|p| !s.received.contains_key(&p.index));
        s.updated_at = session::now_millis();
        if req.finalize && !s.pending.is_empty() {
            state.persist(s);
            return Err(ApiError::Conflict(format!(
                "{} queries still unlabelled",
                s.pending.len()
            )));
        }
        let start = s.pending.is_empty() && (!s.require_finalize || req.finalize);
        if start {
            s.transition(SessionState::Estimating);
        }
        state.persist(s);
        (s.clone(), start)
    };
    if start {
        tokio::spawn(fit(state, slot));
    }
    Ok(Json(snapshot))
}

fn pending_items(
    stage: &QueryStage,
    split: &SplitResult,
    skip: &std::collections::BTreeMap<usize, u8>,
) -> Vec<PendingItem> {
    let raw = split.train.feature_dim() == 2;
    stage
        .query_indices()
        .iter()
        .filter(|i| !skip.contains_key(i))
        .map(|&i| {
            let x = &split.train.features[i];
            let v = if raw {
                x.clone()
            } else {
                stage.state().embed(x).unwrap_or_default()
            };
            PendingItem {
                index: i,
                coords: [
                    v.first().copied().unwrap_or(0.0),
                    v.get(1).copied().unwrap_or(0.0),
                ],
                projection: !raw,
            }
        })
        .collect()
}

async fn warm_up(state: AppState, slot: SlotRef) {
    let (config, plan, dataset, id) = {
        let s = &slot.lock().unwrap().session;
        (
            s.train.clone(),
            s.plan.clone(),
            s.dataset.clone(),
            s.id.clone(),
        )
    };
    let Some(split) = state.dataset(&dataset) else {
        let mut guard = slot.lock().unwrap();
        guard
            .session
            .fail(format!("dataset {dataset:?} no longer available"));
        state.persist(&guard.session);
        return;
    };
    let job_split = split.clone();
    let result = tokio::task::spawn_blocking(move || prepare(&config, &job_split, &plan)).await;
    let resume_fit = {
        let mut guard = slot.lock().unwrap();
        let outcome = match result {
            Ok(Ok(stage)) => Ok(stage),
            Ok(Err(e)) => Err(e.to_string()),
            Err(e) => Err(format!("warm-up task panicked: {e}")),
        };
        match outcome {
            Err(msg) => {
                guard.session.fail(msg);
                false
            }
            Ok(stage) => {
                let s = &mut guard.session;
                let queries = stage.query_indices().to_vec();
                if !s.queries.is_empty() && s.queries != queries {
                    s.fail("replayed warm-up selected different queries".into());
                    state.persist(s);
                    return;
                }
                s.queries = queries;
                s.pending = pending_items(&stage, &split, &s.received);
                if s.state == SessionState::WarmingUp {
                    s.transition(SessionState::AwaitingLabels);
                }
                let resume = matches!(s.state, SessionState::Estimating | SessionState::Training);
                guard.stage = Some(stage);
                log::info!("session {id}: {:?}", guard.session.state);
                resume
            }
        }
    };
    state.persist(&slot.lock().unwrap().session);
    if resume_fit {
        fit(state, slot).await;
    }
}

async fn fit(state: AppState, slot: SlotRef) {
    let (stage, labels, dataset) = {
        let mut guard = slot.lock().unwrap();
        let Some(stage) = guard.stage.take() else {
            // already running or finished
            return;
        };
        let s = &mut guard.session;
        let Some(labels) = s.ordered_labels() else {
            s.fail("training started with unlabelled queries".into());
            state.persist(s);
            return;
        };
        if s.state == SessionState::Estimating {
            s.transition(SessionState::Training);
        }
        state.persist(s);
        (stage, labels, s.dataset.clone())
    };
    let Some(split) = state.dataset(&dataset) else {
        return;
    };
    let result = tokio::task::spawn_blocking(move || {
        let true_ratio = OracleHandle::from_split(&split).true_ratio();
        let out = stage.finish(&split, &labels, Some(true_ratio))?;
        let auc = evaluate(Metric::Auc, &out.state, &split.test).ok();
        Ok::<_, soel_core::Error>(SessionResult {
            alpha_hat: out.report.alpha_hat,
            alpha_tilde: out.report.alpha_tilde,
            test_auc: auc,
            epochs_run: out.report.epochs_run,
        })
    })
    .await;
    let mut guard = slot.lock().unwrap();
    let s = &mut guard.session;
    match result {
        Ok(Ok(r)) => {
            s.result = Some(r);
            s.transition(SessionState::Done);
        }
        Ok(Err(e)) => s.fail(e.to_string()),
        Err(e) => s.fail(format!("training task panicked: {e}")),
    }
    state.persist(s);
}
