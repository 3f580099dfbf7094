//! End-of-trial MTD selection and the ground-truth MTD of a scenario.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::design::{BetaPrior, DoseTally, TargetSpec};
use crate::error::{Error, Result};

const TIE_TOL: f64 = 1e-10;

/// Pseudo-prior for end-of-trial estimates. Nearly flat, so that 0/n
/// estimates sit near zero instead of at 1/(n + 2).
pub const SELECTION_PRIOR: BetaPrior = BetaPrior { a: 0.005, b: 0.005 };

/// Weighted pool-adjacent-violators: the weighted least-squares
/// non-decreasing fit to `values`.
pub fn pava(values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if values.len() != weights.len() {
        return Err(Error::param("pava: values and weights differ in length"));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::param("pava: weights must be positive"));
    }
    // Blocks of (weighted mean, total weight, count).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, c1 + c2));
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, _, c) in blocks {
        out.extend(core::iter::repeat_n(m, c));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Option<usize>,
    /// Isotonic toxicity estimate per dose; `None` for untried doses.
    pub isotonic_estimates: Vec<Option<f64>>,
}

/// Isotonic MTD selection.
///
/// Posterior means (a + x)/(a + b + n) of the tried doses are smoothed by
/// PAVA with weights n + a + b; the selected dose is the tried,
/// non-excluded dose whose estimate is closest to p_T. At equal distance
/// the lowest tied dose wins if its estimate exceeds p_T, otherwise the
/// highest tied dose.
pub fn select_mtd(tallies: &[DoseTally], excluded: &[bool], target: &TargetSpec, prior: BetaPrior) -> Result<SelectionResult> {
    if tallies.len() != excluded.len() {
        return Err(Error::param("tallies and exclusions differ in length"));
    }
    let tried: Vec<usize> = (0..tallies.len()).filter(|&i| tallies[i].n > 0).collect();
    let raw: Vec<f64> = tried
        .iter()
        .map(|&i| (prior.a + tallies[i].x as f64) / (prior.a + prior.b + tallies[i].n as f64))
        .collect();
    let weights: Vec<f64> = tried.iter().map(|&i| tallies[i].n as f64 + prior.a + prior.b).collect();
    let fitted = pava(&raw, &weights)?;

    let mut isotonic_estimates = vec![None; tallies.len()];
    for (&i, &f) in tried.iter().zip(&fitted) {
        isotonic_estimates[i] = Some(f);
    }

    let eligible: Vec<(usize, f64)> = tried.iter().zip(&fitted).filter(|(&i, _)| !excluded[i]).map(|(&i, &f)| (i, f)).collect();
    let best = eligible.iter().map(|&(_, f)| (f - target.p_t).abs()).fold(f64::INFINITY, f64::min);
    let ties: Vec<(usize, f64)> = eligible.into_iter().filter(|&(_, f)| (f - target.p_t).abs() <= best + TIE_TOL).collect();
    let selected = match (ties.first(), ties.last()) {
        (Some(&(low, est)), Some(&(high, _))) => Some(if est > target.p_t { low } else { high }),
        _ => None,
    };
    Ok(SelectionResult { selected, isotonic_estimates })
}

/// Which of the three true-MTD rules applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrueMtdRule {
    /// Doses inside the closed equivalence interval.
    InInterval,
    /// Highest dose below p_T.
    HighestBelowTarget,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueMtd {
    /// 0-based dose indices; empty means no dose should be selected.
    pub doses: Vec<usize>,
    pub rule: TrueMtdRule,
}

impl TrueMtd {
    pub fn is_none(&self) -> bool {
        self.doses.is_empty()
    }

    pub fn contains(&self, dose: usize) -> bool {
        self.doses.contains(&dose)
    }

    pub fn max_dose(&self) -> Option<usize> {
        self.doses.iter().copied().max()
    }
}

/// Ground-truth MTD set: all doses with p_T - ε1 ≤ p ≤ p_T + ε2; failing
/// that the highest dose with p < p_T; failing that none.
pub fn true_mtd(probs: &[f64], target: &TargetSpec) -> TrueMtd {
    let doses: Vec<usize> = (0..probs.len())
        .filter(|&i| probs[i] >= target.lower() - TIE_TOL && probs[i] <= target.upper() + TIE_TOL)
        .collect();
    if !doses.is_empty() {
        return TrueMtd { doses, rule: TrueMtdRule::InInterval };
    }
    match (0..probs.len()).rev().find(|&i| probs[i] < target.p_t) {
        Some(i) => TrueMtd { doses: vec![i], rule: TrueMtdRule::HighestBelowTarget },
        None => TrueMtd { doses: Vec::new(), rule: TrueMtdRule::None },
    }
}
