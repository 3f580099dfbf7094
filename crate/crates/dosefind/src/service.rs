//! HTTP+JSON service: decisions, tables, batch jobs and live sessions.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock, TryLockError};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dosefind_core::tables::{decision_table, diff_grid, GridSide};
use dosefind_core::{DoseTally, OcSummary, Scenario, TrialConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::batch::{run_batch, BatchSpec};
use crate::config::{DesignConfig, DEFAULT_EPS, DESIGN_NAMES};
use crate::error::{AppError, AppResult};
use crate::io::{load_scenarios, oc_csv};
use crate::session::{CohortOutcome, EventStore, SessionConfig, TrialSession};

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = match &self {
            AppError::NotFound(_) => StatusCode::NOT_FOUND,
            AppError::Conflict(_) => StatusCode::CONFLICT,
            AppError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            AppError::Io { .. } | AppError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            e if e.code() == "computation_error" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        (status, Json(json!({ "code": self.code(), "message": self.to_string() }))).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> AppResult<T> {
    serde_json::from_slice(body).map_err(|e| AppError::BadRequest(format!("invalid request body: {e}")))
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done { summaries: Vec<OcSummary>, csv: String },
    Failed { code: String, message: String },
}

#[derive(Debug)]
pub struct ServiceConfig {
    pub store: Option<PathBuf>,
    /// Simulation worker threads; 0 uses every core.
    pub workers: usize,
}

pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Mutex<TrialSession>>>>,
    jobs: RwLock<HashMap<String, JobStatus>>,
    store: EventStore,
    workers: usize,
    counter: AtomicU64,
}

type Shared = Arc<AppState>;

impl AppState {
    /// Opens the store (if any) and replays the sessions it holds.
    pub fn new(cfg: &ServiceConfig) -> AppResult<Self> {
        let store = match &cfg.store {
            Some(p) => EventStore::open(p)?,
            None => EventStore::memory(),
        };
        let sessions = store
            .load()?
            .into_iter()
            .map(|s| (s.id.clone(), Arc::new(Mutex::new(s))))
            .collect();
        Ok(AppState {
            sessions: RwLock::new(sessions),
            jobs: RwLock::new(HashMap::new()),
            store,
            workers: cfg.workers,
            counter: AtomicU64::new(0),
        })
    }

    fn session(&self, id: &str) -> AppResult<Arc<Mutex<TrialSession>>> {
        self.sessions
            .read()
            .map_err(|_| AppError::Internal("session map poisoned".into()))?
            .get(id)
            .cloned()
            .ok_or_else(|| AppError::NotFound(format!("no trial session '{id}'")))
    }

    fn new_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        format!("{}-{n}", uuid::Uuid::new_v4().simple())
    }
}

fn lock(session: &Mutex<TrialSession>) -> AppResult<std::sync::MutexGuard<'_, TrialSession>> {
    match session.try_lock() {
        Ok(g) => Ok(g),
        Err(TryLockError::WouldBlock) => Err(AppError::Conflict("another update to this session is in progress".into())),
        Err(TryLockError::Poisoned(_)) => Err(AppError::Internal("session poisoned".into())),
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/designs", get(designs))
        .route("/decision", post(decision))
        .route("/tables", post(tables))
        .route("/diff", post(diff))
        .route("/simulate", post(simulate))
        .route("/jobs/{id}", get(job))
        .route("/trials", post(create_trial))
        .route("/trials/{id}", get(get_trial).delete(delete_trial))
        .route("/trials/{id}/cohorts", post(add_cohort))
        .route("/trials/{id}/whatif", post(what_if))
        .with_state(state)
}

async fn designs() -> Json<Value> {
    let params = |extra: &[&'static str]| {
        let mut p: Vec<&'static str> = vec!["p_T", "eps1", "eps2"];
        p.extend_from_slice(extra);
        p
    };
    let catalog: Vec<Value> = DESIGN_NAMES
        .iter()
        .map(|&name| {
            let (fixed, extra): (bool, &[&'static str]) = match name {
                "tpi" => (true, &["k1", "k2", "prior", "safety", "safety_threshold", "safety_min_n"]),
                "ccd" => (true, &["delta", "prior", "safety", "safety_threshold", "safety_min_n"]),
                "crm" => (false, &["skeleton", "prior_sd", "no_skip", "safety", "safety_threshold", "safety_min_n"]),
                "3+3" => (false, &[]),
                _ => (true, &["prior", "safety", "safety_threshold", "safety_min_n"]),
            };
            json!({ "design": name, "fixed_rule": fixed, "params": params(extra) })
        })
        .collect();
    Json(json!({ "designs": catalog, "default_eps": DEFAULT_EPS }))
}

#[derive(Deserialize)]
struct DecisionRequest {
    #[serde(flatten)]
    design: DesignConfig,
    x: u32,
    n: u32,
}

async fn decision(body: Bytes) -> AppResult<Json<Value>> {
    let req: DecisionRequest = parse(&body)?;
    let design = req.design.instantiate(None, None)?.compile()?;
    let tally = DoseTally::new(req.x, req.n).map_err(|e| AppError::BadRequest(e.to_string()))?;
    let d = design.explain(tally)?;
    let upms: serde_json::Map<String, Value> = d
        .intervals
        .iter()
        .map(|s| (format!("{}:({:.4},{:.4})", s.tag.letter(), s.lo, s.hi), json!(s.score)))
        .collect();
    Ok(Json(json!({
        "design": design.name(),
        "decision": d.decision,
        "rule_decision": d.rule_decision,
        "upms": upms,
        "diagnostics": d,
    })))
}

#[derive(Deserialize)]
struct TableRequest {
    #[serde(flatten)]
    design: DesignConfig,
    n_max: u32,
}

async fn tables(body: Bytes) -> AppResult<Json<Value>> {
    let req: TableRequest = parse(&body)?;
    let design = req.design.instantiate(None, None)?.compile()?;
    let table = decision_table(&design, req.n_max)?;
    let letters: Vec<Vec<&str>> = table.cells.iter().map(|col| col.iter().map(|d| d.letter()).collect()).collect();
    Ok(Json(json!({ "design": design.name(), "n_max": table.n_max, "letters": letters, "table": table })))
}

#[derive(Deserialize)]
struct DiffRequest {
    first: DesignConfig,
    second: DesignConfig,
    #[serde(rename = "p_T")]
    p_t: f64,
    n: u32,
    eps1: Option<Vec<f64>>,
    eps2: Option<Vec<f64>>,
}

async fn diff(body: Bytes) -> AppResult<Json<Value>> {
    let req: DiffRequest = parse(&body)?;
    let margins = dosefind_core::tables::default_margins();
    let eps1 = req.eps1.unwrap_or_else(|| margins.clone());
    let eps2 = req.eps2.unwrap_or(margins);
    let a = req.first.instantiate(Some(req.p_t), None)?;
    let b = req.second.instantiate(Some(req.p_t), None)?;
    let grid = diff_grid(&GridSide::Design(&a), &GridSide::Design(&b), req.p_t, &eps1, &eps2, req.n)?;
    Ok(Json(json!(grid)))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DesignEntry {
    Name(String),
    Config(DesignConfig),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioInput {
    Source(String),
    List(Vec<Scenario>),
}

fn default_sample() -> u32 {
    30
}
fn default_cohort() -> u32 {
    3
}
fn default_start() -> usize {
    1
}
fn default_trials() -> usize {
    1000
}

/// Scenario sources a request may name; files are only read by the CLI.
const GENERATED: [&str; 3] = ["jiwang", "paoletti", "random"];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    designs: Vec<DesignEntry>,
    scenarios: ScenarioInput,
    #[serde(default = "default_sample")]
    sample_size: u32,
    #[serde(default = "default_cohort")]
    cohort_size: u32,
    /// 1-based.
    #[serde(default = "default_start")]
    start_dose: usize,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "crate::config::default_eps")]
    eps1: f64,
    #[serde(default = "crate::config::default_eps")]
    eps2: f64,
}

impl SimulateRequest {
    pub fn into_batch(self) -> AppResult<BatchSpec> {
        if self.start_dose == 0 {
            return Err(AppError::BadRequest("start_dose is 1-based".into()));
        }
        let designs = self
            .designs
            .into_iter()
            .map(|d| match d {
                DesignEntry::Name(n) => DesignConfig::named(&n).with_eps(self.eps1, self.eps2),
                DesignEntry::Config(c) => c,
            })
            .collect();
        let scenarios = match self.scenarios {
            ScenarioInput::Source(s) if GENERATED.contains(&s.split(':').next().unwrap_or_default()) => {
                load_scenarios(&s, self.seed)?
            }
            ScenarioInput::Source(s) => return Err(AppError::BadRequest(format!("unknown scenario source '{s}'"))),
            ScenarioInput::List(list) => {
                for s in &list {
                    s.validate()?;
                }
                list
            }
        };
        let trial = TrialConfig::new(self.sample_size, self.cohort_size)?
            .with_seed(self.seed)
            .with_start_dose(self.start_dose - 1);
        let spec = BatchSpec { designs, scenarios, trial, trials: self.trials };
        spec.compile()?;
        Ok(spec)
    }
}

async fn simulate(State(state): State<Shared>, body: Bytes) -> AppResult<(StatusCode, Json<Value>)> {
    let spec = parse::<SimulateRequest>(&body)?.into_batch()?;
    let id = state.new_id();
    state
        .jobs
        .write()
        .map_err(|_| AppError::Internal("job map poisoned".into()))?
        .insert(id.clone(), JobStatus::Running);
    let worker_state = state.clone();
    let job_id = id.clone();
    tokio::task::spawn_blocking(move || {
        let result = match run_batch(&spec, worker_state.workers) {
            Ok(summaries) => JobStatus::Done { csv: oc_csv(&summaries), summaries },
            Err(e) => JobStatus::Failed { code: e.code().to_string(), message: e.to_string() },
        };
        if let Ok(mut jobs) = worker_state.jobs.write() {
            jobs.insert(job_id, result);
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": id, "status": "running" }))))
}

async fn job(State(state): State<Shared>, Path(id): Path<String>) -> AppResult<Json<Value>> {
    let jobs = state.jobs.read().map_err(|_| AppError::Internal("job map poisoned".into()))?;
    let status = jobs.get(&id).ok_or_else(|| AppError::NotFound(format!("no job '{id}'")))?;
    let mut body = json!(status);
    body["job_id"] = json!(id);
    Ok(Json(body))
}

async fn create_trial(State(state): State<Shared>, body: Bytes) -> AppResult<(StatusCode, Json<Value>)> {
    let cfg: SessionConfig = parse(&body)?;
    let session = TrialSession::create(state.new_id(), cfg)?;
    state.store.append(&session.events()[0])?;
    let view = session.view()?;
    state
        .sessions
        .write()
        .map_err(|_| AppError::Internal("session map poisoned".into()))?
        .insert(session.id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(json!(view))))
}

async fn get_trial(State(state): State<Shared>, Path(id): Path<String>) -> AppResult<Json<Value>> {
    let session = state.session(&id)?;
    let view = lock(&session)?.view()?;
    Ok(Json(json!(view)))
}

async fn delete_trial(State(state): State<Shared>, Path(id): Path<String>) -> AppResult<StatusCode> {
    let session = state.session(&id)?;
    let guard = lock(&session)?;
    let event = crate::session::LoggedEvent {
        session: id.clone(),
        seq: guard.events().len() as u64,
        timestamp_ms: guard.events().last().map_or(0, |e| e.timestamp_ms),
        event: crate::session::Event::Deleted,
    };
    state.store.append(&event)?;
    state.sessions.write().map_err(|_| AppError::Internal("session map poisoned".into()))?.remove(&id);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CohortRequest {
    dlt_count: u32,
    cohort_size: Option<u32>,
    /// Number of cohorts the client believes the session already holds.
    expected_cohorts: Option<usize>,
}

fn outcome_json(out: &CohortOutcome, session: &TrialSession) -> AppResult<Json<Value>> {
    Ok(Json(json!({ "outcome": out, "trial": session.view()? })))
}

async fn add_cohort(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> AppResult<Json<Value>> {
    let req: CohortRequest = parse(&body)?;
    let session = state.session(&id)?;
    let mut guard = lock(&session)?;
    if let Some(expected) = req.expected_cohorts {
        if expected != guard.cohorts() {
            return Err(AppError::Conflict(format!(
                "session has {} cohorts, request expected {expected}",
                guard.cohorts()
            )));
        }
    }
    let size = req.cohort_size.unwrap_or(guard.config.cohort_size);
    let (event, _) = guard.prepare(req.dlt_count, size)?;
    state.store.append(&event)?;
    let out = guard.commit(event)?;
    outcome_json(&out, &guard)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WhatIfRequest {
    dlt_count: u32,
    cohort_size: Option<u32>,
}

async fn what_if(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> AppResult<Json<Value>> {
    let req: WhatIfRequest = parse(&body)?;
    let session = state.session(&id)?;
    let guard = lock(&session)?;
    let size = req.cohort_size.unwrap_or(guard.config.cohort_size);
    let out = guard.what_if(req.dlt_count, size)?;
    Ok(Json(json!(out)))
}

/// Serves until Ctrl-C.
pub async fn serve(addr: std::net::SocketAddr, cfg: ServiceConfig) -> AppResult<()> {
    let state = Arc::new(AppState::new(&cfg)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| AppError::io(format!("cannot bind {addr}"), e))?;
    eprintln!("dosefind listening on {}", listener.local_addr().map_err(|e| AppError::io("local address", e))?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AppError::io("server error", e))
}
