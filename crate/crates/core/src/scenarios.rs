//! Toxicity scenarios: the Ji–Wang (2013) set of 42 six-dose scenarios, the
//! Paoletti et al. (2004) probit-scale generator and a random monotone
//! scenario generator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{below, normal, uniform};
use crate::special::{norm_cdf, norm_quantile};

pub const MAX_DOSES: usize = 20;

/// True toxicity probabilities of the doses plus the trial target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    #[serde(rename = "p_T")]
    pub p_t: f64,
    pub probs: Vec<f64>,
}

impl Scenario {
    /// Probabilities may sit on 0 or 1 so degenerate scenarios can be run.
    pub fn new(label: impl Into<String>, p_t: f64, probs: Vec<f64>) -> Result<Self> {
        let s = Scenario { label: label.into(), p_t, probs };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() || self.probs.len() > MAX_DOSES {
            return Err(Error::param(format!(
                "scenario '{}' has {} doses; 1..={MAX_DOSES} allowed",
                self.label,
                self.probs.len()
            )));
        }
        if !(self.p_t > 0.0 && self.p_t < 1.0) {
            return Err(Error::param(format!("scenario '{}' has p_T = {} outside (0, 1)", self.label, self.p_t)));
        }
        if let Some(p) = self.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::param(format!("scenario '{}' has probability {p} outside [0, 1]", self.label)));
        }
        Ok(())
    }

    pub fn n_doses(&self) -> usize {
        self.probs.len()
    }

    pub fn is_monotone(&self) -> bool {
        self.probs.windows(2).all(|w| w[0] <= w[1])
    }
}

const JIWANG_P10: [[f64; 6]; 14] = [
    [0.04, 0.05, 0.06, 0.07, 0.08, 0.09],
    [0.15, 0.2, 0.25, 0.3, 0.35, 0.4],
    [0.01, 0.1, 0.2, 0.25, 0.3, 0.35],
    [0.01, 0.02, 0.03, 0.04, 0.1, 0.25],
    [0.05, 0.4, 0.5, 0.6, 0.65, 0.7],
    [0.01, 0.03, 0.05, 0.4, 0.5, 0.6],
    [0.01, 0.02, 0.03, 0.04, 0.05, 0.4],
    [0.09, 0.11, 0.13, 0.15, 0.17, 0.19],
    [0.05, 0.07, 0.09, 0.11, 0.13, 0.15],
    [0.01, 0.03, 0.05, 0.07, 0.09, 0.11],
    [0.02, 0.04, 0.08, 0.12, 0.17, 0.25],
    [0.02, 0.04, 0.07, 0.1, 0.15, 0.2],
    [0.1, 0.15, 0.2, 0.25, 0.3, 0.35],
    [0.01, 0.03, 0.05, 0.06, 0.08, 0.1],
];

const JIWANG_P20: [[f64; 6]; 14] = [
    [0.02, 0.05, 0.08, 0.11, 0.14, 0.17],
    [0.25, 0.35, 0.4, 0.5, 0.6, 0.7],
    [0.01, 0.2, 0.4, 0.6, 0.8, 0.95],
    [0.04, 0.06, 0.08, 0.1, 0.2, 0.5],
    [0.05, 0.5, 0.8, 0.9, 0.95, 0.99],
    [0.01, 0.05, 0.1, 0.5, 0.7, 0.9],
    [0.01, 0.03, 0.07, 0.1, 0.15, 0.7],
    [0.19, 0.21, 0.23, 0.25, 0.27, 0.29],
    [0.15, 0.17, 0.19, 0.21, 0.23, 0.25],
    [0.11, 0.13, 0.15, 0.17, 0.19, 0.21],
    [0.05, 0.11, 0.17, 0.23, 0.29, 0.35],
    [0.05, 0.1, 0.15, 0.2, 0.3, 0.4],
    [0.2, 0.25, 0.3, 0.35, 0.4, 0.45],
    [0.05, 0.08, 0.11, 0.14, 0.17, 0.2],
];

const JIWANG_P30: [[f64; 6]; 14] = [
    [0.02, 0.05, 0.1, 0.15, 0.2, 0.25],
    [0.35, 0.45, 0.5, 0.6, 0.7, 0.8],
    [0.01, 0.3, 0.55, 0.65, 0.8, 0.95],
    [0.04, 0.06, 0.08, 0.1, 0.3, 0.6],
    [0.05, 0.6, 0.8, 0.9, 0.95, 0.99],
    [0.01, 0.05, 0.1, 0.6, 0.7, 0.9],
    [0.01, 0.03, 0.07, 0.1, 0.15, 0.75],
    [0.29, 0.31, 0.33, 0.35, 0.37, 0.39],
    [0.25, 0.27, 0.29, 0.31, 0.33, 0.35],
    [0.21, 0.23, 0.25, 0.27, 0.29, 0.31],
    [0.05, 0.2, 0.27, 0.33, 0.39, 0.45],
    [0.05, 0.1, 0.2, 0.3, 0.4, 0.4],
    [0.3, 0.35, 0.4, 0.45, 0.5, 0.55],
    [0.15, 0.18, 0.21, 0.24, 0.27, 0.3],
];

/// Targets covered by the Ji–Wang set.
pub const JIWANG_TARGETS: [f64; 3] = [0.1, 0.2, 0.3];

/// The 14 Ji–Wang scenarios for `p_t` ∈ {0.1, 0.2, 0.3}, labelled
/// `jiwang-<p_T>-<k>` with k = 1..14.
pub fn builtin_jiwang(p_t: f64) -> Result<Vec<Scenario>> {
    let (table, tag) = if (p_t - 0.1).abs() < 1e-9 {
        (&JIWANG_P10, "0.1")
    } else if (p_t - 0.2).abs() < 1e-9 {
        (&JIWANG_P20, "0.2")
    } else if (p_t - 0.3).abs() < 1e-9 {
        (&JIWANG_P30, "0.3")
    } else {
        return Err(Error::param(format!("the Ji-Wang set covers p_T in {{0.1, 0.2, 0.3}}, not {p_t}")));
    };
    let p_t = JIWANG_TARGETS[JIWANG_TARGETS.iter().position(|t| (t - p_t).abs() < 1e-9).unwrap()];
    Ok(table
        .iter()
        .enumerate()
        .map(|(k, row)| Scenario { label: format!("jiwang-{tag}-{}", k + 1), p_t, probs: row.to_vec() })
        .collect())
}

/// All 42 Ji–Wang scenarios, ordered by target.
pub fn builtin_jiwang_all() -> Vec<Scenario> {
    JIWANG_TARGETS.iter().flat_map(|&p| builtin_jiwang(p).unwrap()).collect()
}

/// Settings of the Paoletti probit-scale scenario generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaolettiConfig {
    pub d: usize,
    #[serde(rename = "p_T")]
    pub p_t: f64,
    /// Location parameters of the offsets: below / above the MTD for the
    /// adjacent doses, then below / above for the remaining doses.
    pub mu: [f64; 4],
    pub sd_mtd: f64,
    pub sd_adj: f64,
    pub sd_far: f64,
}

pub const PAOLETTI_DEFAULT_MU: f64 = 0.55;
const PAOLETTI_MAX_RETRIES: usize = 100;
const PROB_CLIP: f64 = 1e-6;

impl PaolettiConfig {
    pub fn new(d: usize, p_t: f64) -> Self {
        PaolettiConfig { d, p_t, mu: [PAOLETTI_DEFAULT_MU; 4], sd_mtd: 0.01, sd_adj: 0.1, sd_far: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_DOSES).contains(&self.d) {
            return Err(Error::param(format!("Paoletti generator needs 2..={MAX_DOSES} doses")));
        }
        if !(self.p_t > 0.0 && self.p_t < 1.0) {
            return Err(Error::param("p_T must lie in (0, 1)"));
        }
        if self.mu.iter().any(|&m| !(m > 0.0 && m < 1.0)) {
            return Err(Error::param("Paoletti mu values must lie in (0, 1)"));
        }
        if [self.sd_mtd, self.sd_adj, self.sd_far].iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::param("Paoletti standard deviations must be non-negative"));
        }
        Ok(())
    }
}

/// A generated scenario together with the index of the dose drawn as MTD.
#[derive(Debug, Clone, PartialEq)]
pub struct PaolettiDraw {
    pub scenario: Scenario,
    pub mtd: usize,
}

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// One scenario from the Paoletti et al. model.
///
/// The MTD index is uniform; its probability is Φ(ξ) with
/// ξ ~ N(Φ⁻¹(p_T), sd_mtd²). The neighbours are reflected through p_T on the
/// probit scale and pushed outwards by squared offsets, and the remaining
/// doses follow the recursion Φ⁻¹(p_{j∓1}) = Φ⁻¹(p_j) ∓ ξ².
pub fn paoletti_generate<R: RngCore + ?Sized>(cfg: &PaolettiConfig, rng: &mut R) -> Result<PaolettiDraw> {
    cfg.validate()?;
    let d = cfg.d;
    let mtd = below(rng, d as u64) as usize;
    let z_target = norm_quantile(cfg.p_t);

    let mut p_mtd = None;
    for _ in 0..PAOLETTI_MAX_RETRIES {
        let p = clip(norm_cdf(normal(rng, z_target, cfg.sd_mtd)));
        let mirror = 2.0 * cfg.p_t - p;
        if mirror > 0.0 && mirror < 1.0 {
            p_mtd = Some(p);
            break;
        }
    }
    let p_mtd = p_mtd.ok_or_else(|| Error::computation("Paoletti generator: 2 p_T - p_MTD left (0, 1) on every retry"))?;

    let z_mtd = norm_quantile(p_mtd);
    let z_mirror = norm_quantile(2.0 * cfg.p_t - p_mtd);
    let offset = |rng: &mut R, mu: f64, sd: f64| {
        let xi = normal(rng, norm_quantile(mu), sd);
        xi * xi
    };

    let mut probs = alloc::vec![0.0; d];
    probs[mtd] = p_mtd;
    if mtd > 0 {
        let reflect = if z_mtd > z_target { z_mtd - z_mirror } else { 0.0 };
        let z = z_mtd - reflect - offset(rng, cfg.mu[0], cfg.sd_adj);
        probs[mtd - 1] = clip(norm_cdf(z)).min(p_mtd);
    }
    if mtd + 1 < d {
        let reflect = if z_mtd < z_target { z_mirror - z_mtd } else { 0.0 };
        let z = z_mtd + reflect + offset(rng, cfg.mu[1], cfg.sd_adj);
        probs[mtd + 1] = clip(norm_cdf(z)).max(p_mtd);
    }
    for j in (0..mtd.saturating_sub(1)).rev() {
        let z = norm_quantile(probs[j + 1]) - offset(rng, cfg.mu[2], cfg.sd_far);
        probs[j] = clip(norm_cdf(z)).min(probs[j + 1]);
    }
    for j in (mtd + 2)..d {
        let z = norm_quantile(probs[j - 1]) + offset(rng, cfg.mu[3], cfg.sd_far);
        probs[j] = clip(norm_cdf(z)).max(probs[j - 1]);
    }
    Ok(PaolettiDraw { scenario: Scenario { label: String::from("paoletti"), p_t: cfg.p_t, probs }, mtd })
}

/// Shape family of the random scenario generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveFamily {
    /// Sorted independent uniforms on (lo, hi).
    SortedUniform { lo: f64, hi: f64 },
    /// logit p_j = logit p_T + slope · (j - c), with the crossing point c
    /// uniform over the dose range and slope uniform in (min_slope, max_slope).
    Logistic { min_slope: f64, max_slope: f64 },
}

/// Axes of the random scenario generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomScenarioAxes {
    pub min_doses: usize,
    pub max_doses: usize,
    pub targets: Vec<f64>,
    pub curve: CurveFamily,
}

impl Default for RandomScenarioAxes {
    fn default() -> Self {
        RandomScenarioAxes {
            min_doses: 3,
            max_doses: 8,
            targets: alloc::vec![0.1, 0.2, 0.25, 0.3, 0.33],
            curve: CurveFamily::Logistic { min_slope: 0.3, max_slope: 1.5 },
        }
    }
}

impl RandomScenarioAxes {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.min_doses && self.min_doses <= self.max_doses && self.max_doses <= MAX_DOSES) {
            return Err(Error::param(format!("dose range must satisfy 1 <= min <= max <= {MAX_DOSES}")));
        }
        if self.targets.is_empty() || self.targets.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::param("targets must be a non-empty list of probabilities in (0, 1)"));
        }
        match self.curve {
            CurveFamily::SortedUniform { lo, hi } if !(0.0 <= lo && lo < hi && hi <= 1.0) => {
                Err(Error::param("sorted-uniform curve needs 0 <= lo < hi <= 1"))
            }
            CurveFamily::Logistic { min_slope, max_slope } if !(0.0 < min_slope && min_slope <= max_slope) => {
                Err(Error::param("logistic curve needs 0 < min_slope <= max_slope"))
            }
            _ => Ok(()),
        }
    }
}

/// A random monotone scenario: dose count uniform on the configured range,
/// p_T uniform over the configured targets, curve from the configured family.
pub fn random_scenario<R: RngCore + ?Sized>(axes: &RandomScenarioAxes, rng: &mut R) -> Result<Scenario> {
    axes.validate()?;
    let d = axes.min_doses + below(rng, (axes.max_doses - axes.min_doses + 1) as u64) as usize;
    let p_t = axes.targets[below(rng, axes.targets.len() as u64) as usize];
    let mut probs: Vec<f64> = match axes.curve {
        CurveFamily::SortedUniform { lo, hi } => (0..d).map(|_| lo + (hi - lo) * uniform(rng)).collect(),
        CurveFamily::Logistic { min_slope, max_slope } => {
            let slope = min_slope + (max_slope - min_slope) * uniform(rng);
            let crossing = -0.5 + d as f64 * uniform(rng);
            let base = libm::log(p_t / (1.0 - p_t));
            (0..d).map(|j| 1.0 / (1.0 + libm::exp(-(base + slope * (j as f64 - crossing))))).collect()
        }
    };
    probs.sort_by(f64::total_cmp);
    for p in probs.iter_mut() {
        *p = clip(*p);
    }
    Ok(Scenario { label: String::from("random"), p_t, probs })
}
