//! One-parameter CRM with the power ("empiric") model
//! p_i(θ) = q_i^exp(θ), θ ~ Normal(0, prior_sd²).
//!
//! Posterior expectations are one-dimensional integrals over θ. The
//! posterior is log-concave, so a coarse pass locates the region holding
//! all but ~e^-45 of the mass and a trapezoid rule on that region (which
//! converges geometrically for smooth, rapidly decaying integrands) does
//! the rest.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::design::{Decision, DoseTally};
use crate::error::{Error, Result};

pub const DEFAULT_PRIOR_SD: f64 = 1.34;
pub const DEFAULT_SKELETON: [f64; 6] = [0.05, 0.10, 0.20, 0.30, 0.40, 0.50];
pub const MAX_DOSES: usize = 20;

const RANGE_SDS: f64 = 12.0;
const COARSE_POINTS: usize = 241;
const FINE_INTERVALS: usize = 400;
const LOG_MASS_CUTOFF: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrmModel {
    pub skeleton: Vec<f64>,
    pub prior_sd: f64,
}

impl CrmModel {
    pub fn new(skeleton: Vec<f64>, prior_sd: f64) -> Result<Self> {
        let model = CrmModel { skeleton, prior_sd };
        model.validate()?;
        Ok(model)
    }

    /// The default skeleton truncated or extended to `n_doses`.
    pub fn default_for(n_doses: usize) -> Self {
        let mut skeleton: Vec<f64> = DEFAULT_SKELETON.iter().copied().take(n_doses).collect();
        while skeleton.len() < n_doses {
            let last = *skeleton.last().unwrap_or(&0.0);
            skeleton.push(last + 0.2 * (1.0 - last));
        }
        CrmModel { skeleton, prior_sd: DEFAULT_PRIOR_SD }
    }

    pub fn n_doses(&self) -> usize {
        self.skeleton.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.skeleton.len();
        if !(2..=MAX_DOSES).contains(&k) {
            return Err(Error::param(alloc::format!("CRM skeleton needs 2..={MAX_DOSES} doses, got {k}")));
        }
        if self.skeleton.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::param("CRM skeleton values must lie in (0, 1)"));
        }
        if self.skeleton.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("CRM skeleton must be strictly increasing"));
        }
        if !(self.prior_sd > 0.0 && self.prior_sd.is_finite()) {
            return Err(Error::param("CRM prior_sd must be positive"));
        }
        Ok(())
    }
}

/// Per-dose tallies, exclusions and the current dose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialData {
    pub tallies: Vec<DoseTally>,
    pub excluded: Vec<bool>,
    pub current: usize,
}

impl TrialData {
    pub fn new(n_doses: usize, current: usize) -> Self {
        TrialData { tallies: vec![DoseTally::empty(); n_doses], excluded: vec![false; n_doses], current }
    }

    pub fn validate(&self, n_doses: usize) -> Result<()> {
        if self.tallies.len() != n_doses || self.excluded.len() != n_doses || self.current >= n_doses {
            return Err(Error::param("trial data does not match the number of doses"));
        }
        if self.tallies.iter().any(|t| t.x > t.n) {
            return Err(Error::param("DLT count exceeds patients"));
        }
        Ok(())
    }

    pub fn highest_tried(&self) -> Option<usize> {
        self.tallies.iter().rposition(|t| t.n > 0)
    }
}

/// Posterior mean and standard deviation of each dose's toxicity probability.
#[derive(Debug, Clone, PartialEq)]
pub struct CrmPosterior {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

struct LogLik<'a> {
    log_q: Vec<f64>,
    tallies: &'a [DoseTally],
    prior_var: f64,
}

impl LogLik<'_> {
    fn log_density(&self, theta: f64) -> f64 {
        let scale = libm::exp(theta);
        let mut ll = -0.5 * theta * theta / self.prior_var;
        for (lq, t) in self.log_q.iter().zip(self.tallies) {
            if t.n == 0 {
                continue;
            }
            let lp = scale * lq;
            if t.x > 0 {
                ll += t.x as f64 * lp;
            }
            if t.n > t.x {
                ll += (t.n - t.x) as f64 * libm::log(-libm::expm1(lp));
            }
        }
        ll
    }
}

pub fn crm_posterior(model: &CrmModel, tallies: &[DoseTally]) -> Result<CrmPosterior> {
    model.validate()?;
    if tallies.len() != model.n_doses() {
        return Err(Error::param("tallies do not match the skeleton length"));
    }
    let ll = LogLik {
        log_q: model.skeleton.iter().map(|&q| libm::log(q)).collect(),
        tallies,
        prior_var: model.prior_sd * model.prior_sd,
    };

    let half = RANGE_SDS * model.prior_sd;
    let step = 2.0 * half / (COARSE_POINTS - 1) as f64;
    let coarse: Vec<f64> = (0..COARSE_POINTS).map(|j| ll.log_density(-half + j as f64 * step)).collect();
    let peak = coarse.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::computation("CRM posterior has no finite mass"));
    }
    let first = coarse.iter().position(|&v| v > peak - LOG_MASS_CUTOFF).unwrap_or(0);
    let last = coarse.iter().rposition(|&v| v > peak - LOG_MASS_CUTOFF).unwrap_or(COARSE_POINTS - 1);
    let lo = -half + first.saturating_sub(1) as f64 * step;
    let hi = -half + (last + 1).min(COARSE_POINTS - 1) as f64 * step;

    let h = (hi - lo) / FINE_INTERVALS as f64;
    let k = model.n_doses();
    let thetas: Vec<f64> = (0..=FINE_INTERVALS).map(|j| lo + j as f64 * h).collect();
    let logs: Vec<f64> = thetas.iter().map(|&t| ll.log_density(t)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut z = 0.0;
    let mut m1 = vec![0.0; k];
    let mut m2 = vec![0.0; k];
    for (j, (&theta, &lv)) in thetas.iter().zip(&logs).enumerate() {
        let mut w = libm::exp(lv - top);
        if j == 0 || j == FINE_INTERVALS {
            w *= 0.5;
        }
        if w == 0.0 {
            continue;
        }
        z += w;
        let scale = libm::exp(theta);
        for (i, lq) in ll.log_q.iter().enumerate() {
            let p = libm::exp(scale * lq);
            m1[i] += w * p;
            m2[i] += w * p * p;
        }
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::computation("CRM quadrature failed"));
    }
    let mean: Vec<f64> = m1.iter().map(|v| v / z).collect();
    let sd = m2
        .iter()
        .zip(&mean)
        .map(|(v, m)| libm::sqrt((v / z - m * m).max(0.0)))
        .collect();
    Ok(CrmPosterior { mean, sd })
}

/// Posterior mean toxicity probability of every dose.
pub fn crm_posterior_tox(model: &CrmModel, data: &TrialData) -> Result<Vec<f64>> {
    data.validate(model.n_doses())?;
    Ok(crm_posterior(model, &data.tallies)?.mean)
}

/// Dose whose posterior mean toxicity is closest to `p_t` (ties go to the
/// lower dose). Excluded doses are skipped and, with `no_skip`, nothing
/// more than one level above the highest tried dose is eligible. `None`
/// means every dose is excluded.
pub fn crm_next_dose(model: &CrmModel, data: &TrialData, p_t: f64, no_skip: bool) -> Result<Option<usize>> {
    let means = crm_posterior_tox(model, data)?;
    Ok(closest_eligible(&means, data, p_t, no_skip))
}

pub(crate) fn closest_eligible(means: &[f64], data: &TrialData, p_t: f64, no_skip: bool) -> Option<usize> {
    let cap = match data.highest_tried() {
        Some(h) => h + 1,
        None => data.current,
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, &m) in means.iter().enumerate() {
        if data.excluded[i] || (no_skip && i > cap) {
            continue;
        }
        let dist = (m - p_t).abs();
        if best.is_none_or(|(_, d)| dist < d - 1e-15) {
            best = Some((i, dist));
        }
    }
    best.map(|(i, _)| i)
}

/// E/S/D relative to the current dose; multi-level moves still map to E or D.
pub fn crm_relative_decision(current: usize, next: usize) -> Decision {
    match next.cmp(&current) {
        core::cmp::Ordering::Greater => Decision::Escalate,
        core::cmp::Ordering::Equal => Decision::Stay,
        core::cmp::Ordering::Less => Decision::DeEscalate,
    }
}
