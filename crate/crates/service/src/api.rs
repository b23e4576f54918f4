use std::collections::{HashMap, HashSet};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use edtm_core::corpus::{parse_corpus, validate_labels, Document, LabelSpec};
use edtm_core::harness::{CostSource, Mode};
use edtm_core::ot::validate_mass;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ServiceConfig;
use crate::session::{
    execute, now_ms, AssignSettings, JobInput, JobRecord, JobState, JobStatus, ResultsView,
    Session, SessionMeta, SessionState,
};
use crate::store::Store;

pub struct AppState {
    pub config: ServiceConfig,
    pub store: Store,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    order: RwLock<Vec<String>>,
}

pub type Shared = Arc<AppState>;

impl AppState {
    /// Open the data directory and load persisted sessions.
    pub fn open(config: ServiceConfig) -> edtm_core::Result<Shared> {
        let store = Store::open(&config.data_dir)?;
        let mut sessions = HashMap::new();
        let mut order = Vec::new();
        for (docs, state) in store.load_all()? {
            order.push(state.meta.id.clone());
            sessions.insert(state.meta.id.clone(), Arc::new(Session::new(docs, state)));
        }
        Ok(Arc::new(AppState {
            config,
            store,
            sessions: RwLock::new(sessions),
            order: RwLock::new(order),
        }))
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id:?}")))
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/labels", put(put_labels))
        .route("/sessions/{id}/assign", post(start_assignment))
        .route("/sessions/{id}/jobs/{job}", get(get_job))
        .route("/sessions/{id}/results", get(get_results))
        .route("/sessions/{id}/documents", get(search_documents))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    line: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            line: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl From<edtm_core::Error> for ApiError {
    fn from(e: edtm_core::Error) -> Self {
        use edtm_core::Error as E;
        let status = match e {
            E::Io(_) | E::Json(_) | E::Format { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        let line = match e {
            E::Parse { line, .. } => Some(line),
            _ => None,
        };
        ApiError {
            status,
            message: e.to_string(),
            line,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(status = %self.status, "{}", self.message);
        }
        let mut body = json!({ "error": self.message });
        if let Some(line) = self.line {
            body["line"] = json!(line);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Session fields safe to show clients. Cost sources are omitted since
/// they may carry credentials.
#[derive(Debug, Serialize)]
struct SessionSummary {
    id: String,
    name: Option<String>,
    created_ms: u64,
    documents: usize,
    has_gold: bool,
    label_version: u64,
    status: JobStatus,
    results_job: Option<String>,
}

impl From<&SessionMeta> for SessionSummary {
    fn from(m: &SessionMeta) -> Self {
        SessionSummary {
            id: m.id.clone(),
            name: m.name.clone(),
            created_ms: m.created_ms,
            documents: m.documents,
            has_gold: m.has_gold,
            label_version: m.label_version,
            status: m.status.clone(),
            results_job: m.results_job.clone(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    name: Option<String>,
    /// Corpus JSONL text.
    corpus: String,
    costs: Option<CostSource>,
}

async fn create_session(
    State(app): State<Shared>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionSummary>)> {
    let costs = req
        .costs
        .or_else(|| app.config.costs.clone())
        .ok_or_else(|| ApiError::bad_request("no cost source given and none configured"))?;
    let docs = parse_corpus(&req.corpus)?;
    let meta = SessionMeta {
        id: uuid::Uuid::new_v4().simple().to_string(),
        name: req.name,
        created_ms: now_ms(),
        documents: docs.len(),
        has_gold: docs.iter().any(|d| d.gold_label.is_some()),
        costs,
        label_version: 0,
        jobs: 0,
        status: JobStatus::Idle,
        results_job: None,
    };
    app.store.create(&meta, &docs)?;
    let summary = SessionSummary::from(&meta);
    let session = Session::new(
        docs,
        SessionState {
            meta,
            labels: Arc::new(Vec::new()),
            jobs: Vec::new(),
            results: None,
        },
    );
    let id = summary.id.clone();
    app.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), Arc::new(session));
    app.order.write().unwrap_or_else(|e| e.into_inner()).push(id);
    tracing::info!(session = %summary.id, documents = summary.documents, "session created");
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn list_sessions(State(app): State<Shared>) -> ApiResult<Json<Vec<SessionSummary>>> {
    let ids = app.order.read().unwrap_or_else(|e| e.into_inner()).clone();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        out.push(SessionSummary::from(&app.session(&id)?.lock().meta));
    }
    Ok(Json(out))
}

#[derive(Serialize)]
struct SessionDetail {
    #[serde(flatten)]
    summary: SessionSummary,
    labels: Vec<LabelSpec>,
    jobs: Vec<JobRecord>,
}

async fn get_session(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<SessionDetail>> {
    let session = app.session(&id)?;
    let st = session.lock();
    Ok(Json(SessionDetail {
        summary: SessionSummary::from(&st.meta),
        labels: st.labels.to_vec(),
        jobs: st.jobs.clone(),
    }))
}

#[derive(Serialize)]
struct LabelsAccepted {
    label_version: u64,
    labels: Vec<LabelSpec>,
    /// A job is running on an earlier version; these labels apply to the next one.
    queued: bool,
}

async fn put_labels(
    State(app): State<Shared>,
    Path(id): Path<String>,
    Json(labels): Json<Vec<LabelSpec>>,
) -> ApiResult<Json<LabelsAccepted>> {
    let session = app.session(&id)?;
    let ids: HashSet<&str> = session.docs.iter().map(|d| d.id.as_str()).collect();
    validate_labels(&labels, Some(&ids))?;
    let mut st = session.lock();
    let version = st.meta.label_version + 1;
    app.store.save_labels(&id, version, &labels)?;
    st.meta.label_version = version;
    app.store.save_meta(&st.meta)?;
    st.labels = Arc::new(labels.clone());
    Ok(Json(LabelsAccepted {
        label_version: version,
        labels,
        queued: matches!(st.meta.status, JobStatus::Running { .. }),
    }))
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModeKind {
    #[default]
    Complete,
    Partial,
}

/// Assignment request. Unset fields fall back to the service defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AssignRequest {
    mode: ModeKind,
    p: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    shuffle_seed: Option<u64>,
    lambda: Option<f64>,
    tolerance: Option<f64>,
    max_iters: Option<usize>,
}

impl AssignRequest {
    fn settings(&self, config: &ServiceConfig) -> ApiResult<AssignSettings> {
        let mode = match (self.mode, self.p) {
            (ModeKind::Complete, None) => Mode::Complete,
            (ModeKind::Complete, Some(_)) => {
                return Err(ApiError::bad_request("p applies only to partial mode"))
            }
            (ModeKind::Partial, None) => return Err(ApiError::bad_request("partial mode needs p")),
            (ModeKind::Partial, Some(p)) => {
                validate_mass(p)?;
                Mode::Partial { p }
            }
        };
        let mut schedule = config.schedule;
        schedule.batch_size = self.batch_size.unwrap_or(schedule.batch_size);
        schedule.epochs = self.epochs.unwrap_or(schedule.epochs);
        schedule.shuffle_seed = self.shuffle_seed.unwrap_or(schedule.shuffle_seed);
        schedule.validate()?;
        let mut solver = config.solver;
        solver.lambda = self.lambda.unwrap_or(solver.lambda);
        solver.tolerance = self.tolerance.unwrap_or(solver.tolerance);
        solver.max_iters = self.max_iters.unwrap_or(solver.max_iters);
        solver.validate()?;
        Ok(AssignSettings { mode, schedule, solver })
    }
}

#[derive(Serialize)]
struct JobStarted {
    job: String,
    label_version: u64,
}

async fn start_assignment(
    State(app): State<Shared>,
    Path(id): Path<String>,
    body: Option<Json<AssignRequest>>,
) -> ApiResult<(StatusCode, Json<JobStarted>)> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let settings = req.settings(&app.config)?;
    let session = app.session(&id)?;
    let input = {
        let mut st = session.lock();
        if let JobStatus::Running { job } = &st.meta.status {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("{job} is still running"),
            ));
        }
        if st.meta.label_version == 0 {
            return Err(ApiError::bad_request("set labels before assigning"));
        }
        let job = format!("job-{}", st.meta.jobs + 1);
        let record = JobRecord {
            id: job.clone(),
            label_version: st.meta.label_version,
            settings: settings.clone(),
            state: JobState::Running,
            stage: None,
            message: None,
            started_ms: now_ms(),
            finished_ms: None,
        };
        app.store.save_job(&id, &record)?;
        st.meta.jobs += 1;
        st.meta.status = JobStatus::Running { job: job.clone() };
        app.store.save_meta(&st.meta)?;
        st.jobs.push(record);
        JobInput {
            job,
            label_version: st.meta.label_version,
            settings,
            docs: session.docs.clone(),
            labels: st.labels.clone(),
            costs: st.meta.costs.clone(),
        }
    };
    let started = JobStarted {
        job: input.job.clone(),
        label_version: input.label_version,
    };
    tracing::info!(session = %id, job = %input.job, "assignment started");

    let job_dir = app.store.job_dir(&id, &input.job);
    tokio::spawn(async move {
        let job = input.job.clone();
        let outcome = tokio::task::spawn_blocking(move || execute(&input, &job_dir)).await;
        let outcome = match outcome {
            Ok(Ok(view)) => Ok(view),
            Ok(Err(e)) => Err((e.stage().map(String::from), e.to_string())),
            Err(join) => Err((None, format!("job aborted: {join}"))),
        };
        finish(&app, &session, &id, &job, outcome);
    });
    Ok((StatusCode::ACCEPTED, Json(started)))
}

fn finish(
    app: &AppState,
    session: &Session,
    id: &str,
    job: &str,
    outcome: Result<ResultsView, (Option<String>, String)>,
) {
    let mut st = session.lock();
    let Some(pos) = st.jobs.iter().position(|j| j.id == job) else {
        return;
    };
    st.jobs[pos].finished_ms = Some(now_ms());
    match outcome {
        Ok(view) => {
            tracing::info!(session = %id, job, "assignment finished");
            st.jobs[pos].state = JobState::Done;
            st.meta.status = JobStatus::Done { job: job.to_string() };
            st.meta.results_job = Some(job.to_string());
            st.results = Some(Arc::new(view));
        }
        Err((stage, message)) => {
            tracing::warn!(session = %id, job, "assignment failed: {message}");
            st.jobs[pos].state = JobState::Failed;
            st.jobs[pos].stage = stage.clone();
            st.jobs[pos].message = Some(message.clone());
            st.meta.status = JobStatus::Failed {
                job: job.to_string(),
                stage,
                message,
            };
        }
    }
    let saved = app
        .store
        .save_job(id, &st.jobs[pos])
        .and_then(|_| app.store.save_meta(&st.meta));
    if let Err(e) = saved {
        tracing::error!(session = %id, job, "cannot persist job state: {e}");
    }
}

async fn get_job(
    State(app): State<Shared>,
    Path((id, job)): Path<(String, String)>,
) -> ApiResult<Json<JobRecord>> {
    let session = app.session(&id)?;
    let st = session.lock();
    st.jobs
        .iter()
        .find(|j| j.id == job)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no job {job:?} in session {id:?}")))
}

#[derive(Serialize)]
struct ResultsResponse {
    status: JobStatus,
    /// Latest successful job's snapshot, kept when a later job fails.
    results: Option<Arc<ResultsView>>,
}

async fn get_results(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<ResultsResponse>> {
    let session = app.session(&id)?;
    let (status, results) = {
        let st = session.lock();
        (st.meta.status.clone(), st.results.clone())
    };
    Ok(Json(ResultsResponse { status, results }))
}

#[derive(Deserialize)]
struct SearchQuery {
    #[serde(default)]
    q: String,
    limit: Option<usize>,
}

const DEFAULT_SEARCH_LIMIT: usize = 50;

#[derive(Serialize)]
struct SearchResults {
    total: usize,
    documents: Vec<Document>,
}

/// Case-insensitive substring filter over document ids and text.
async fn search_documents(
    State(app): State<Shared>,
    Path(id): Path<String>,
    Query(query): Query<SearchQuery>,
) -> ApiResult<Json<SearchResults>> {
    let session = app.session(&id)?;
    let needle = query.q.to_lowercase();
    let hits: Vec<&Document> = session
        .docs
        .iter()
        .filter(|d| d.id.to_lowercase().contains(&needle) || d.text.to_lowercase().contains(&needle))
        .collect();
    Ok(Json(SearchResults {
        total: hits.len(),
        documents: hits
            .into_iter()
            .take(query.limit.unwrap_or(DEFAULT_SEARCH_LIMIT))
            .cloned()
            .collect(),
    }))
}
