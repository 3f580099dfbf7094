//! Parallel Monte Carlo batches.
//!
//! Trial `t` of design `d` on scenario `s` always draws from stream
//! `(seed, s, d, t)`, and results are gathered in index order, so output
//! does not depend on the number of workers.

use dosefind_core::rng::StreamId;
use dosefind_core::simulator::{check_setup, simulate_stream, summarize, TrialConfig, TrialRecord};
use dosefind_core::tables::EmpiricalTable;
use dosefind_core::{Design, OcSummary, Scenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::DesignConfig;
use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub designs: Vec<DesignConfig>,
    pub scenarios: Vec<Scenario>,
    pub trial: TrialConfig,
    pub trials: usize,
}

impl BatchSpec {
    pub fn validate(&self) -> AppResult<()> {
        if self.trials == 0 {
            return Err(AppError::BadRequest("trials per scenario must be at least 1".into()));
        }
        if self.designs.is_empty() || self.scenarios.is_empty() {
            return Err(AppError::BadRequest("a batch needs at least one design and one scenario".into()));
        }
        self.trial.validate()?;
        Ok(())
    }

    /// Every (scenario, design) pair compiled and checked before any trial
    /// runs. Scenario-major order.
    pub fn compile(&self) -> AppResult<Vec<Job<'_>>> {
        self.validate()?;
        let mut jobs = Vec::with_capacity(self.scenarios.len() * self.designs.len());
        for (si, scenario) in self.scenarios.iter().enumerate() {
            for (di, cfg) in self.designs.iter().enumerate() {
                let spec = cfg.instantiate(Some(scenario.p_t), Some(scenario.n_doses()))?;
                let design = spec.compile()?.with_cache(self.trial.sample_size)?;
                check_setup(&design, scenario, &self.trial)
                    .map_err(|e| AppError::BadRequest(format!("{} on {}: {e}", spec.name(), scenario.label)))?;
                jobs.push(Job { scenario_index: si, design_index: di, scenario, design });
            }
        }
        Ok(jobs)
    }
}

pub struct Job<'a> {
    pub scenario_index: usize,
    pub design_index: usize,
    pub scenario: &'a Scenario,
    pub design: Design,
}

impl Job<'_> {
    fn stream(&self, seed: u64, trial: usize) -> StreamId {
        StreamId::new(seed, self.scenario_index as u64, self.design_index as u64, trial as u64)
    }

    pub fn records(&self, cfg: &TrialConfig, trials: usize) -> AppResult<Vec<TrialRecord>> {
        (0..trials)
            .into_par_iter()
            .map(|t| simulate_stream(&self.design, self.scenario, cfg, self.stream(cfg.seed, t)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(AppError::from)
    }

    pub fn summary(&self, cfg: &TrialConfig, trials: usize) -> AppResult<OcSummary> {
        let records = self.records(cfg, trials)?;
        Ok(summarize(&self.design.name(), self.scenario, self.design.target(), &records)?)
    }
}

/// Runs `f` on a pool of `workers` threads (0 picks the number of cores).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> AppResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| AppError::Internal(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// One summary per (scenario, design), scenario-major.
pub fn run_batch(spec: &BatchSpec, workers: usize) -> AppResult<Vec<OcSummary>> {
    let jobs = spec.compile()?;
    with_workers(workers, || {
        jobs.par_iter().map(|job| job.summary(&spec.trial, spec.trials)).collect::<AppResult<Vec<_>>>()
    })?
}

/// Decision frequencies of one design pooled over all scenarios of the
/// batch (the design list must hold exactly one entry).
pub fn empirical_table(spec: &BatchSpec, n_max: u32, workers: usize) -> AppResult<EmpiricalTable> {
    if spec.designs.len() != 1 {
        return Err(AppError::BadRequest("empirical tables are built from a single design".into()));
    }
    let jobs = spec.compile()?;
    with_workers(workers, || {
        let tables = jobs
            .par_iter()
            .map(|job| Ok(dosefind_core::tables::crm_empirical_table(&job.records(&spec.trial, spec.trials)?, n_max)?))
            .collect::<AppResult<Vec<_>>>()?;
        let mut total = EmpiricalTable::new(n_max);
        for t in &tables {
            total.merge(t)?;
        }
        Ok(total)
    })?
}
