//! Live trial-conduct sessions.
//!
//! A session is its event log: a `created` event followed by one `cohort`
//! event per treated cohort (and `deleted` at the end of its life). State
//! is rebuilt by replaying the log through the same transition the
//! simulator uses, and replay checks every logged decision.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use dosefind_core::trial::{StopReason, TrialState, TrialStatus};
use dosefind_core::{Decision, Design, DesignSpec, DoseTally};
use serde::{Deserialize, Serialize};

use crate::config::DesignConfig;
use crate::error::{AppError, AppResult};

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub design: DesignConfig,
    pub n_doses: usize,
    pub sample_size: u32,
    pub cohort_size: u32,
    /// 1-based.
    #[serde(default = "one")]
    pub start_dose: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Event {
    Created { config: SessionConfig, spec: DesignSpec },
    Cohort {
        /// 1-based dose the cohort was treated at.
        dose: usize,
        dlt_count: u32,
        cohort_size: u32,
        decision: Decision,
        applied: Decision,
        next_dose: Option<usize>,
    },
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub session: String,
    pub seq: u64,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Result of applying (or previewing) one cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortOutcome {
    /// 1-based dose the cohort was treated at.
    pub dose: usize,
    pub tally: DoseTally,
    /// The design's decision for the tally, as in its decision table.
    pub decision: Decision,
    /// The move actually made after capping at the dose range and
    /// exclusions (`STOP` ends the trial).
    pub applied: Decision,
    /// 1-based; `None` when the trial has ended.
    pub next_dose: Option<usize>,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    /// Ended by the safety rule.
    Stopped,
    /// Sample size used up or the design declared its MTD.
    Completed,
}

fn status_of(state: &TrialState) -> SessionStatus {
    match state.status {
        TrialStatus::Active => SessionStatus::Active,
        TrialStatus::Stopped(StopReason::SafetyStop) => SessionStatus::Stopped,
        TrialStatus::Stopped(_) => SessionStatus::Completed,
    }
}

/// Client-facing snapshot of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub design: String,
    pub spec: DesignSpec,
    pub config: SessionConfig,
    pub status: SessionStatus,
    pub stop_reason: Option<StopReason>,
    /// 1-based; `None` once the trial has ended.
    pub current_dose: Option<usize>,
    pub treated: u32,
    pub tallies: Vec<DoseTally>,
    pub excluded: Vec<bool>,
    /// 1-based recommendation at the current state.
    pub selected: Option<usize>,
    pub events: Vec<LoggedEvent>,
}

#[derive(Debug, Clone)]
pub struct TrialSession {
    pub id: String,
    pub config: SessionConfig,
    design: Design,
    state: TrialState,
    log: Vec<LoggedEvent>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl TrialSession {
    fn build(config: &SessionConfig, spec: &DesignSpec) -> AppResult<(Design, TrialState)> {
        if config.start_dose == 0 || config.start_dose > config.n_doses {
            return Err(AppError::BadRequest("start_dose must be between 1 and n_doses".into()));
        }
        if config.cohort_size == 0 || config.sample_size < config.cohort_size {
            return Err(AppError::BadRequest("need sample_size >= cohort_size >= 1".into()));
        }
        if let Some((model, _)) = spec.compile()?.crm_model() {
            if model.n_doses() != config.n_doses {
                return Err(AppError::BadRequest("CRM skeleton length differs from n_doses".into()));
            }
        }
        let design = spec.compile()?;
        let state = TrialState::new(config.n_doses, config.start_dose - 1, config.sample_size)?;
        Ok((design, state))
    }

    pub fn create(id: String, config: SessionConfig) -> AppResult<Self> {
        if !(1..=dosefind_core::scenarios::MAX_DOSES).contains(&config.n_doses) {
            return Err(AppError::BadRequest("n_doses must be between 1 and 20".into()));
        }
        let spec = config.design.instantiate(None, Some(config.n_doses))?;
        let (design, state) = Self::build(&config, &spec)?;
        let created = LoggedEvent { session: id.clone(), seq: 0, timestamp_ms: now_ms(), event: Event::Created { config: config.clone(), spec } };
        Ok(TrialSession { id, config, design, state, log: vec![created] })
    }

    pub fn events(&self) -> &[LoggedEvent] {
        &self.log
    }

    pub fn cohorts(&self) -> usize {
        self.log.len() - 1
    }

    fn step(state: &mut TrialState, design: &Design, dlt: u32, size: u32) -> AppResult<CohortOutcome> {
        if !state.is_active() {
            return Err(AppError::Unprocessable("the trial has ended".into()));
        }
        if dlt > size {
            return Err(AppError::Unprocessable(format!("dlt_count {dlt} exceeds cohort_size {size}")));
        }
        let record = state.apply_cohort(design, dlt, size).map_err(|e| AppError::from(e).in_trial())?;
        let decision = if design.is_fixed_rule() { design.decide(record.tally)? } else { record.decision };
        Ok(CohortOutcome {
            dose: record.dose + 1,
            tally: record.tally,
            decision,
            applied: record.decision,
            next_dose: record.next_dose.map(|d| d + 1),
            status: status_of(state),
        })
    }

    /// The event that applying this cohort would append.
    pub fn prepare(&self, dlt: u32, size: u32) -> AppResult<(LoggedEvent, CohortOutcome)> {
        let mut state = self.state.clone();
        let out = Self::step(&mut state, &self.design, dlt, size)?;
        let event = LoggedEvent {
            session: self.id.clone(),
            seq: self.log.len() as u64,
            timestamp_ms: now_ms(),
            event: Event::Cohort {
                dose: out.dose,
                dlt_count: dlt,
                cohort_size: size,
                decision: out.decision,
                applied: out.applied,
                next_dose: out.next_dose,
            },
        };
        Ok((event, out))
    }

    /// Appends a prepared event (after it has been persisted).
    pub fn commit(&mut self, event: LoggedEvent) -> AppResult<CohortOutcome> {
        let Event::Cohort { dlt_count, cohort_size, decision, applied, next_dose, .. } = event.event else {
            return Err(AppError::Internal("only cohort events can be committed".into()));
        };
        let out = Self::step(&mut self.state, &self.design, dlt_count, cohort_size)?;
        if (out.decision, out.applied, out.next_dose) != (decision, applied, next_dose) {
            return Err(AppError::Internal(format!("session {}: logged decision does not match replay", self.id)));
        }
        self.log.push(event);
        Ok(out)
    }

    pub fn apply(&mut self, dlt: u32, size: u32) -> AppResult<CohortOutcome> {
        let (event, _) = self.prepare(dlt, size)?;
        self.commit(event)
    }

    /// The outcome a cohort would have, without touching the session.
    pub fn what_if(&self, dlt: u32, size: u32) -> AppResult<CohortOutcome> {
        Ok(self.prepare(dlt, size)?.1)
    }

    /// Rebuilds a session from its log.
    pub fn replay(events: &[LoggedEvent]) -> AppResult<Self> {
        let (first, rest) = events.split_first().ok_or_else(|| AppError::Internal("empty event log".into()))?;
        let Event::Created { config, spec } = &first.event else {
            return Err(AppError::Internal(format!("session {} does not start with a created event", first.session)));
        };
        let (design, state) = Self::build(config, spec)?;
        let mut session = TrialSession { id: first.session.clone(), config: config.clone(), design, state, log: vec![first.clone()] };
        for e in rest {
            session.commit(e.clone())?;
        }
        Ok(session)
    }

    pub fn view(&self) -> AppResult<SessionView> {
        let selected = if self.state.treated > 0 { self.state.select(&self.design)?.map(|d| d + 1) } else { None };
        Ok(SessionView {
            id: self.id.clone(),
            design: self.design.name(),
            spec: self.design.spec().clone(),
            config: self.config.clone(),
            status: status_of(&self.state),
            stop_reason: match self.state.status {
                TrialStatus::Stopped(r) => Some(r),
                TrialStatus::Active => None,
            },
            current_dose: self.state.is_active().then(|| self.state.current() + 1),
            treated: self.state.treated,
            tallies: self.state.data.tallies.clone(),
            excluded: self.state.data.excluded.clone(),
            selected,
            events: self.log.clone(),
        })
    }
}

/// Append-only JSON-lines event store. Without a path it keeps nothing.
#[derive(Debug, Default)]
pub struct EventStore {
    path: Option<PathBuf>,
    file: Mutex<Option<File>>,
}

impl EventStore {
    pub fn memory() -> Self {
        EventStore::default()
    }

    pub fn open(path: &Path) -> AppResult<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| AppError::io(format!("cannot open session store {}", path.display()), e))?;
        Ok(EventStore { path: Some(path.to_path_buf()), file: Mutex::new(Some(file)) })
    }

    pub fn append(&self, event: &LoggedEvent) -> AppResult<()> {
        let mut guard = self.file.lock().map_err(|_| AppError::Internal("session store poisoned".into()))?;
        if let Some(f) = guard.as_mut() {
            let mut line = serde_json::to_string(event).map_err(|e| AppError::Internal(e.to_string()))?;
            line.push('\n');
            f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(|e| AppError::io("cannot append to session store", e))?;
        }
        Ok(())
    }

    /// Replays every session in the store that has not been deleted.
    pub fn load(&self) -> AppResult<Vec<TrialSession>> {
        let Some(path) = &self.path else {
            return Ok(Vec::new());
        };
        let file = File::open(path).map_err(|e| AppError::io(format!("cannot read {}", path.display()), e))?;
        let mut logs: BTreeMap<String, Vec<LoggedEvent>> = BTreeMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| AppError::io("cannot read session store", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let event: LoggedEvent = serde_json::from_str(&line).map_err(|e| AppError::Parse {
                path: path.display().to_string(),
                line: i as u64 + 1,
                column: e.column() as u64,
                message: e.to_string(),
            })?;
            if event.event == Event::Deleted {
                logs.remove(&event.session);
            } else {
                logs.entry(event.session.clone()).or_default().push(event);
            }
        }
        logs.values().map(|events| TrialSession::replay(events)).collect()
    }
}
