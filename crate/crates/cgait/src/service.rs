//! HTTP API under `/v1`.
//!
//! Mutations of one case are serialized by a lease: a second request that
//! arrives while the lease is held gets `409 Conflict` instead of waiting.
//! Every mutation is on disk before its response is sent.

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cgait_core::adjudicator::{
    AdjudicationResult, AdjudicatorConfig, AdjudicatorError, CaseRecord, CaseState, Clock, Contestation,
    ContestationKind, FinalDecision, FinalOutcome, WindowRef,
};
use cgait_core::cnn::Network;
use cgait_core::signal::{gait_events, Channel, ContactConfig, GaitMetrics, Interval, WINDOW_LEN};
use cgait_core::xmed::{DiscrepancySummary, XmedConfig};
use cgait_core::Severity;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use crate::backend::{SharedBackend, SystemClock};
use crate::data::{DataSet, SubjectSummary, ANALYSIS_CHANNEL};
use crate::pipeline::{analyze, prompt_context, window_gait_metrics, NO_STRIDES};
use crate::store::{CaseStore, StoreError, StoredCase};

pub type SharedClock = Arc<dyn Clock + Send + Sync>;

pub struct AppState {
    pub data: DataSet,
    pub model: Option<Network>,
    pub xmed: XmedConfig,
    pub adjudicator: AdjudicatorConfig,
    pub auto_adjudicate_on_alert: bool,
    pub auth_token: Option<String>,
    backend: SharedBackend,
    clock: SharedClock,
    store: CaseStore,
    cases: Mutex<BTreeMap<String, StoredCase>>,
    leases: Mutex<HashSet<String>>,
    llm_slots: Semaphore,
    next_case: AtomicU64,
}

pub struct StateParts {
    pub data: DataSet,
    pub model: Option<Network>,
    pub xmed: XmedConfig,
    pub adjudicator: AdjudicatorConfig,
    pub auto_adjudicate_on_alert: bool,
    pub auth_token: Option<String>,
    pub backend: SharedBackend,
    pub clock: SharedClock,
    pub audit_log_path: std::path::PathBuf,
    pub llm_concurrency: usize,
}

impl AppState {
    pub fn new(p: StateParts) -> Result<Arc<AppState>, StoreError> {
        let (store, cases) = CaseStore::open(&p.audit_log_path)?;
        let next = cases
            .keys()
            .filter_map(|k| k.strip_prefix("case-").and_then(|n| n.parse::<u64>().ok()))
            .max()
            .map_or(1, |n| n + 1);
        Ok(Arc::new(AppState {
            data: p.data,
            model: p.model,
            xmed: p.xmed,
            adjudicator: p.adjudicator,
            auto_adjudicate_on_alert: p.auto_adjudicate_on_alert,
            auth_token: p.auth_token,
            backend: p.backend,
            clock: p.clock,
            store,
            cases: Mutex::new(cases),
            leases: Mutex::new(HashSet::new()),
            llm_slots: Semaphore::new(p.llm_concurrency.max(1)),
            next_case: AtomicU64::new(next),
        }))
    }

    pub fn with_system_clock(mut p: StateParts) -> Result<Arc<AppState>, StoreError> {
        p.clock = Arc::new(SystemClock);
        AppState::new(p)
    }

    fn case(&self, id: &str) -> Option<StoredCase> {
        self.cases.lock().unwrap().get(id).cloned()
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Conflict(String),
    Unprocessable(String),
    ModelNotLoaded,
    BadGateway(&'static str, String),
    Unauthorized,
    Internal(String),
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl From<AdjudicatorError> for ApiError {
    fn from(e: AdjudicatorError) -> Self {
        let msg = e.to_string();
        match e {
            AdjudicatorError::AlreadyFinalized
            | AdjudicatorError::NotJustified
            | AdjudicatorError::InvalidTransition { .. } => ApiError::Conflict(msg),
            AdjudicatorError::EmptyContestation | AdjudicatorError::Prompt(_) => ApiError::Unprocessable(msg),
            AdjudicatorError::BackendUnavailable { .. } => ApiError::BadGateway("backend_unavailable", msg),
            AdjudicatorError::DecisionParseFailure => ApiError::BadGateway("decision_parse_failure", msg),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::Unprocessable(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, "conflict", m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", m),
            ApiError::ModelNotLoaded => (
                StatusCode::SERVICE_UNAVAILABLE,
                "model_not_loaded",
                "no checkpoint is configured".into(),
            ),
            ApiError::BadGateway(code, m) => (StatusCode::BAD_GATEWAY, code, m),
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token".into()),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
        };
        (status, Json(json!({"error": {"code": code, "message": message}}))).into_response()
    }
}

/// Exclusive right to mutate one case; released on drop.
struct Lease {
    state: Arc<AppState>,
    case_id: String,
}

impl Lease {
    fn acquire(state: &Arc<AppState>, case_id: &str) -> Result<Lease, ApiError> {
        if !state.leases.lock().unwrap().insert(case_id.to_string()) {
            return Err(ApiError::Conflict(format!("case {case_id} is being modified")));
        }
        Ok(Lease {
            state: state.clone(),
            case_id: case_id.to_string(),
        })
    }
}

impl Drop for Lease {
    fn drop(&mut self) {
        self.state.leases.lock().unwrap().remove(&self.case_id);
    }
}

/// Run `f` on a copy of the case and persist whatever audit entries it
/// added, including those of a failed attempt.
fn mutate<T>(
    state: &AppState,
    case_id: &str,
    f: impl FnOnce(&mut CaseRecord, &dyn Clock) -> Result<T, AdjudicatorError>,
) -> Result<(T, StoredCase), ApiError> {
    let mut case = state.case(case_id).ok_or_else(|| ApiError::NotFound(format!("case {case_id}")))?;
    let before = case.record.audit.len();
    let out = f(&mut case.record, state.clock.as_ref());
    if case.record.audit.len() > before {
        state.store.commit(&case, &case.record.audit[before..])?;
        state.cases.lock().unwrap().insert(case_id.to_string(), case.clone());
    }
    Ok((out?, case))
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    model_loaded: bool,
    subjects: usize,
    cases: usize,
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok",
        model_loaded: s.model.is_some(),
        subjects: s.data.subjects.len(),
        cases: s.cases.lock().unwrap().len(),
    })
}

async fn list_subjects(State(s): State<Arc<AppState>>) -> Json<Vec<SubjectSummary>> {
    Json(s.data.summaries())
}

#[derive(Deserialize)]
struct WindowQuery {
    /// Comma-separated channel names; defaults to the analysis channel.
    channels: Option<String>,
}

#[derive(Serialize)]
struct Series {
    channel: String,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct Markers {
    heel_strikes: Vec<usize>,
    toe_offs: Vec<usize>,
    stance: Vec<Interval>,
    swing: Vec<Interval>,
}

#[derive(Serialize)]
struct WindowView {
    subject_id: String,
    label: Severity,
    window_index: usize,
    start_frame: usize,
    sample_rate_hz: f64,
    series: Vec<Series>,
    /// `null` when the window holds fewer than two heel strikes.
    gait_metrics: Option<GaitMetrics>,
    /// Contact events of the analysis channel, in window-relative frames.
    markers: Markers,
}

async fn window_view(
    State(s): State<Arc<AppState>>,
    Path((id, n)): Path<(String, usize)>,
    Query(q): Query<WindowQuery>,
) -> Result<Json<WindowView>, ApiError> {
    let subject = s.data.subject(&id).ok_or_else(|| ApiError::NotFound(format!("subject {id}")))?;
    let rec = &subject.recording;
    if n >= rec.len() / WINDOW_LEN {
        return Err(ApiError::NotFound(format!("window {n} of subject {id}")));
    }
    let range = n * WINDOW_LEN..(n + 1) * WINDOW_LEN;
    let channels: Vec<Channel> = match q.channels.as_deref().map(str::trim).filter(|c| !c.is_empty()) {
        None => vec![ANALYSIS_CHANNEL],
        Some(list) => list
            .split(',')
            .map(|c| c.parse::<Channel>())
            .collect::<Result<_, _>>()
            .map_err(|e| ApiError::Unprocessable(e.to_string()))?,
    };
    let series = channels
        .iter()
        .map(|&c| Series {
            channel: c.to_string(),
            values: rec.channel(c)[range.clone()].to_vec(),
        })
        .collect();
    let analysis = &rec.channel(ANALYSIS_CHANNEL)[range];
    let ev = gait_events(analysis, rec.sample_rate_hz(), &ContactConfig::default());
    let window = subject.window(n).expect("index checked above");
    Ok(Json(WindowView {
        subject_id: id,
        label: subject.label,
        window_index: n,
        start_frame: n * WINDOW_LEN,
        sample_rate_hz: rec.sample_rate_hz(),
        series,
        gait_metrics: window_gait_metrics(&window, None),
        markers: Markers {
            heel_strikes: ev.heel_strikes,
            toe_offs: ev.toe_offs,
            stance: ev.stance,
            swing: ev.swing,
        },
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Predicted,
    UnderReview,
    Contested,
    Justified,
    Finalized,
}

fn status(state: CaseState) -> (Status, Option<FinalOutcome>) {
    match state {
        CaseState::Predicted => (Status::Predicted, None),
        CaseState::UnderReview => (Status::UnderReview, None),
        CaseState::Contested => (Status::Contested, None),
        CaseState::Justified => (Status::Justified, None),
        CaseState::Finalized(o) => (Status::Finalized, Some(o)),
    }
}

#[derive(Serialize)]
struct CaseView {
    case_id: String,
    status: Status,
    outcome: Option<FinalOutcome>,
    created_ms: u64,
    xmed: DiscrepancySummary,
    explanations: Explanations,
    record: CaseRecord,
}

#[derive(Serialize)]
struct Explanations {
    gradcam: cgait_core::explain::ExplanationMap,
    lrp: cgait_core::explain::ExplanationMap,
}

impl From<StoredCase> for CaseView {
    fn from(c: StoredCase) -> Self {
        let (status, outcome) = status(c.record.state);
        CaseView {
            case_id: c.record.case_id.clone(),
            status,
            outcome,
            created_ms: c.created_ms,
            xmed: c.record.discrepancy.summary(),
            explanations: Explanations {
                gradcam: c.gradcam,
                lrp: c.lrp,
            },
            record: c.record,
        }
    }
}

#[derive(Serialize)]
struct CaseListItem {
    case_id: String,
    status: Status,
    subject_id: String,
    window_index: usize,
    predicted_class: Severity,
    alert: bool,
    final_label: Option<Severity>,
}

async fn list_cases(State(s): State<Arc<AppState>>) -> Json<Vec<CaseListItem>> {
    let cases = s.cases.lock().unwrap();
    Json(
        cases
            .values()
            .map(|c| CaseListItem {
                case_id: c.record.case_id.clone(),
                status: status(c.record.state).0,
                subject_id: c.record.window.subject_id.clone(),
                window_index: c.record.window.window_index,
                predicted_class: c.record.prediction.predicted_class,
                alert: c.record.discrepancy.alert,
                final_label: c.record.final_label,
            })
            .collect(),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictBody {
    subject_id: String,
    window_index: usize,
    #[serde(default = "default_actor")]
    actor: String,
}

fn default_actor() -> String {
    "clinician".into()
}

async fn create_case(
    State(s): State<Arc<AppState>>,
    body: Result<Json<PredictBody>, JsonRejection>,
) -> Result<(StatusCode, Json<CaseView>), ApiError> {
    let Json(body) = body?;
    if s.model.is_none() {
        return Err(ApiError::ModelNotLoaded);
    }
    let subject = s
        .data
        .subject(&body.subject_id)
        .ok_or_else(|| ApiError::NotFound(format!("subject {}", body.subject_id)))?;
    let window = subject
        .window(body.window_index)
        .ok_or_else(|| ApiError::NotFound(format!("window {} of subject {}", body.window_index, body.subject_id)))?;
    let fallback = subject.recording.channel(ANALYSIS_CHANNEL).to_vec();
    let st = s.clone();
    let case = tokio::task::spawn_blocking(move || -> Result<StoredCase, ApiError> {
        let net = st.model.as_ref().expect("checked above");
        let a = analyze(net, &window, &st.xmed).map_err(|e| ApiError::Internal(e.to_string()))?;
        let metrics = window_gait_metrics(&window, Some(&fallback)).unwrap_or(NO_STRIDES);
        let n = st.next_case.fetch_add(1, Ordering::SeqCst);
        let case_id = format!("case-{n:06}");
        let window_ref = WindowRef {
            subject_id: window.source_id.clone(),
            window_index: body.window_index,
            start_frame: window.start_frame,
        };
        let clock = st.clock.as_ref();
        let context = prompt_context(&a, metrics);
        let mut record = CaseRecord::new(case_id, window_ref, a.prediction, a.discrepancy, context, clock)?;
        record.begin_review(&body.actor, clock)?;
        let case = StoredCase {
            created_ms: clock.now_ms(),
            record,
            gradcam: a.gradcam,
            lrp: a.lrp,
        };
        st.store.commit(&case, &case.record.audit)?;
        st.cases.lock().unwrap().insert(case.record.case_id.clone(), case.clone());
        Ok(case)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    if s.auto_adjudicate_on_alert && case.record.discrepancy.alert {
        let st = s.clone();
        let id = case.record.case_id.clone();
        tokio::spawn(async move {
            if let Err(e) = run_adjudication(st, id.clone()).await {
                tracing::warn!(case = %id, "automatic adjudication failed: {e:?}");
            }
        });
    }
    Ok((StatusCode::CREATED, Json(case.into())))
}

async fn get_case(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<CaseView>, ApiError> {
    let case = s.case(&id).ok_or_else(|| ApiError::NotFound(format!("case {id}")))?;
    Ok(Json(case.into()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContestBody {
    kind: ContestationKind,
    free_text: String,
    #[serde(default = "default_actor")]
    author: String,
}

async fn contest(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<ContestBody>, JsonRejection>,
) -> Result<Json<CaseView>, ApiError> {
    let Json(body) = body?;
    let _lease = Lease::acquire(&s, &id)?;
    let (_, case) = mutate(&s, &id, |rec, clock| {
        rec.contest(
            Contestation {
                kind: body.kind,
                free_text: body.free_text,
                author: body.author,
                timestamp: clock.now_ms(),
            },
            clock,
        )
    })?;
    Ok(Json(case.into()))
}

#[derive(Serialize)]
struct AdjudicateResponse {
    result: AdjudicationResult,
    case: CaseView,
}

async fn run_adjudication(s: Arc<AppState>, id: String) -> Result<(AdjudicationResult, StoredCase), ApiError> {
    let lease = Lease::acquire(&s, &id)?;
    if s.case(&id).is_none() {
        return Err(ApiError::NotFound(format!("case {id}")));
    }
    let _permit = s.llm_slots.acquire().await.map_err(|e| ApiError::Internal(e.to_string()))?;
    let st = s.clone();
    tokio::task::spawn_blocking(move || {
        let _lease = lease;
        let backend = st.backend.clone();
        let cfg = st.adjudicator.clone();
        mutate(&st, &id, |rec, clock| rec.adjudicate(backend.as_ref(), clock, &cfg))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn adjudicate(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<AdjudicateResponse>, ApiError> {
    let (result, case) = run_adjudication(s, id).await?;
    Ok(Json(AdjudicateResponse {
        result,
        case: case.into(),
    }))
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DecisionKind {
    Accept,
    Override,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FinalizeBody {
    decision: DecisionKind,
    label: Option<Severity>,
    #[serde(default = "default_actor")]
    actor: String,
}

async fn finalize(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<FinalizeBody>, JsonRejection>,
) -> Result<Json<CaseView>, ApiError> {
    let Json(body) = body?;
    let decision = match (body.decision, body.label) {
        (DecisionKind::Accept, None) => FinalDecision::Accept,
        (DecisionKind::Override, Some(label)) => FinalDecision::Override(label),
        (DecisionKind::Accept, Some(_)) => return Err(ApiError::Unprocessable("accept takes no label".into())),
        (DecisionKind::Override, None) => return Err(ApiError::Unprocessable("override requires a label".into())),
    };
    let _lease = Lease::acquire(&s, &id)?;
    let (_, case) = mutate(&s, &id, |rec, clock| rec.finalize(&body.actor, decision, clock))?;
    Ok(Json(case.into()))
}

#[derive(Deserialize)]
struct AuditQuery {
    format: Option<String>,
}

async fn audit(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<AuditQuery>,
) -> Result<Response, ApiError> {
    if s.case(&id).is_none() {
        return Err(ApiError::NotFound(format!("case {id}")));
    }
    let audit = s.store.case_audit(&id)?;
    if q.format.as_deref() == Some("jsonl") {
        return Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], audit.jsonl).into_response());
    }
    let verified = audit.verified();
    let entries: Vec<serde_json::Value> = audit
        .jsonl
        .lines()
        .map(|l| serde_json::from_str(l).expect("line parsed when collected"))
        .collect();
    Ok(Json(json!({"case_id": id, "verified": verified, "entries": entries})).into_response())
}

async fn require_token(State(s): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &s.auth_token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|v| v == token);
        if !ok && req.uri().path() != "/v1/health" {
            return ApiError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/subjects", get(list_subjects))
        .route("/v1/subjects/{id}/windows/{n}", get(window_view))
        .route("/v1/cases", get(list_cases).post(create_case))
        .route("/v1/cases/{id}", get(get_case))
        .route("/v1/cases/{id}/contest", post(contest))
        .route("/v1/cases/{id}/adjudicate", post(adjudicate))
        .route("/v1/cases/{id}/finalize", post(finalize))
        .route("/v1/cases/{id}/audit", get(audit))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Serve until a shutdown signal; in-flight requests finish first.
pub async fn serve(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await
}
