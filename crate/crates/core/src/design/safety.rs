use serde::{Deserialize, Serialize};

use super::posterior::posterior;
use super::types::{BetaPrior, DoseTally, TargetSpec};
use crate::error::{Error, Result};

/// Dose-exclusion rule: exclude when Pr(p > p_T | data) exceeds
/// `threshold` and at least `min_n` patients have been treated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyRule {
    pub threshold: f64,
    pub min_n: u32,
}

impl SafetyRule {
    pub fn new(threshold: f64, min_n: u32) -> Result<Self> {
        if !(threshold > 0.5 && threshold < 1.0) {
            return Err(Error::param(alloc::format!("safety threshold {threshold} must lie in (0.5, 1)")));
        }
        if min_n == 0 {
            return Err(Error::param("safety rule needs min_n >= 1"));
        }
        Ok(SafetyRule { threshold, min_n })
    }
}

impl Default for SafetyRule {
    fn default() -> Self {
        SafetyRule { threshold: 0.95, min_n: 3 }
    }
}

/// Pr(p > p_T | data) under the Beta posterior.
pub fn overdose_probability(p_t: f64, prior: BetaPrior, tally: DoseTally) -> Result<f64> {
    Ok(1.0 - posterior(tally, prior)?.cdf(p_t)?)
}

pub fn safety_exclude(target: &TargetSpec, tally: DoseTally, threshold: f64, min_n: u32) -> Result<bool> {
    safety_exclude_with_prior(target, BetaPrior::default(), tally, SafetyRule::new(threshold, min_n)?)
}

pub fn safety_exclude_with_prior(target: &TargetSpec, prior: BetaPrior, tally: DoseTally, rule: SafetyRule) -> Result<bool> {
    if tally.n < rule.min_n {
        return Ok(false);
    }
    Ok(overdose_probability(target.p_t, prior, tally)? > rule.threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fires_on_three_of_three() {
        let tg = TargetSpec::symmetric(0.3, 0.05).unwrap();
        let t = |x, n| DoseTally::new(x, n).unwrap();
        assert!(safety_exclude(&tg, t(3, 3), 0.95, 3).unwrap());
        assert!(!safety_exclude(&tg, t(0, 3), 0.95, 3).unwrap());
        assert!(!safety_exclude(&tg, t(2, 3), 0.95, 3).unwrap());
        // 2/2 is over the threshold but below min_n.
        assert!(!safety_exclude(&tg, t(2, 2), 0.95, 3).unwrap());
        let p = overdose_probability(0.3, BetaPrior::default(), t(3, 3)).unwrap();
        assert!((p - (1.0 - 0.3f64.powi(4))).abs() < 1e-12);
        let p = overdose_probability(0.3, BetaPrior::default(), t(2, 3)).unwrap();
        assert!((p - 0.9163).abs() < 1e-12);
        assert!(safety_exclude(&tg, t(0, 3), 0.4, 3).is_err());
        assert!(safety_exclude(&tg, t(0, 3), 0.95, 0).is_err());
    }
}
