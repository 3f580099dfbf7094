//! Probability-interval designs: TPI, mTPI and mTPI-2.
//!
//! Each rule scores a set of toxicity intervals tagged E, S or D with the
//! posterior of the current dose and returns the tag of the best interval.
//! Near-ties go to the safer tag (D over S over E).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::posterior::{interval_probability, posterior, BetaPosterior};
use super::types::{BetaPrior, Decision, DoseTally, Interval, TargetSpec};
use crate::error::Result;

const TIE_REL_TOL: f64 = 1e-12;
// Tiles shorter than this, produced by floating-point drift, are dropped.
const MIN_TILE: f64 = 1e-12;

/// A scored interval, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalScore {
    pub lo: f64,
    pub hi: f64,
    pub tag: Decision,
    pub probability: f64,
    /// Probability per unit length (equal to `probability` for TPI, which
    /// scores raw probabilities).
    pub score: f64,
}

/// Picks the highest score; `scores` must be ordered from the least to the
/// most conservative tag so that ties resolve towards safety.
pub(crate) fn argmax_safest(scores: &[IntervalScore]) -> Decision {
    let mut best: Option<&IntervalScore> = None;
    for s in scores {
        match best {
            None => best = Some(s),
            Some(b) => {
                let tol = TIE_REL_TOL * b.score.abs().max(s.score.abs());
                if s.score > b.score + tol || (s.score >= b.score - tol && s.tag > b.tag) {
                    best = Some(s);
                }
            }
        }
    }
    best.map(|b| b.tag).unwrap_or(Decision::Stay)
}

fn score_intervals(
    post: &BetaPosterior,
    intervals: &[(Interval, Decision)],
    per_unit: bool,
) -> Result<Vec<IntervalScore>> {
    intervals
        .iter()
        .map(|&(iv, tag)| {
            let probability = interval_probability(post, iv)?;
            let score = if per_unit { probability / iv.len() } else { probability };
            Ok(IntervalScore { lo: iv.lo, hi: iv.hi, tag, probability, score })
        })
        .collect()
}

/// UI, EI and OI of the target.
pub fn mtpi_intervals(target: &TargetSpec) -> Result<[(Interval, Decision); 3]> {
    Ok([
        (Interval::new(0.0, target.lower())?, Decision::Escalate),
        (Interval::new(target.lower(), target.upper())?, Decision::Stay),
        (Interval::new(target.upper(), 1.0)?, Decision::DeEscalate),
    ])
}

pub fn mtpi_scores(target: &TargetSpec, prior: BetaPrior, tally: DoseTally) -> Result<Vec<IntervalScore>> {
    let post = posterior(tally, prior)?;
    score_intervals(&post, &mtpi_intervals(target)?, true)
}

/// mTPI: the interval with the largest unit probability mass wins.
pub fn mtpi_decide(target: &TargetSpec, tally: DoseTally) -> Result<Decision> {
    mtpi_decide_with_prior(target, BetaPrior::default(), tally)
}

pub fn mtpi_decide_with_prior(target: &TargetSpec, prior: BetaPrior, tally: DoseTally) -> Result<Decision> {
    if tally.n == 0 {
        return Ok(Decision::Stay);
    }
    Ok(argmax_safest(&mtpi_scores(target, prior, tally)?))
}

/// The mTPI-2 partition of (0, 1): the EI plus UI and OI tiled by
/// subintervals of the EI's length, clipped at 0 and 1. Ordered by `lo`.
pub fn mtpi2_partition(target: &TargetSpec) -> Result<Vec<(Interval, Decision)>> {
    let width = target.width();
    let (lower, upper) = (target.lower(), target.upper());
    let mut below = Vec::new();
    let mut k = 0u32;
    loop {
        let hi = lower - k as f64 * width;
        if hi <= MIN_TILE {
            break;
        }
        let lo = (lower - (k + 1) as f64 * width).max(0.0);
        let lo = if lo <= MIN_TILE { 0.0 } else { lo };
        below.push((Interval::new(lo, hi)?, Decision::Escalate));
        k += 1;
    }
    below.reverse();

    let mut tiles = below;
    tiles.push((Interval::new(lower, upper)?, Decision::Stay));
    let mut k = 0u32;
    loop {
        let lo = upper + k as f64 * width;
        if lo >= 1.0 - MIN_TILE {
            break;
        }
        let hi = (upper + (k + 1) as f64 * width).min(1.0);
        let hi = if hi >= 1.0 - MIN_TILE { 1.0 } else { hi };
        tiles.push((Interval::new(lo, hi)?, Decision::DeEscalate));
        k += 1;
    }
    Ok(tiles)
}

pub fn mtpi2_scores_on(tiles: &[(Interval, Decision)], prior: BetaPrior, tally: DoseTally) -> Result<Vec<IntervalScore>> {
    let post = posterior(tally, prior)?;
    score_intervals(&post, tiles, true)
}

/// mTPI-2: the subinterval with the largest unit probability mass wins;
/// clipped boundary tiles use their actual length.
pub fn mtpi2_decide(target: &TargetSpec, tally: DoseTally) -> Result<Decision> {
    mtpi2_decide_on(&mtpi2_partition(target)?, BetaPrior::default(), tally)
}

pub fn mtpi2_decide_on(tiles: &[(Interval, Decision)], prior: BetaPrior, tally: DoseTally) -> Result<Decision> {
    if tally.n == 0 {
        return Ok(Decision::Stay);
    }
    Ok(argmax_safest(&mtpi2_scores_on(tiles, prior, tally)?))
}

/// TPI intervals (0, p_T - K1 σ), (p_T - K1 σ, p_T + K2 σ), (p_T + K2 σ, 1)
/// scored by posterior probability. Intervals clipped to nothing score 0.
pub fn tpi_scores(target: &TargetSpec, k1: f64, k2: f64, prior: BetaPrior, tally: DoseTally) -> Result<Vec<IntervalScore>> {
    let post = posterior(tally, prior)?;
    let sd = post.sd();
    let lower = (target.p_t - k1 * sd).clamp(0.0, 1.0);
    let upper = (target.p_t + k2 * sd).clamp(0.0, 1.0);
    let bounds = [(0.0, lower, Decision::Escalate), (lower, upper, Decision::Stay), (upper, 1.0, Decision::DeEscalate)];
    bounds
        .iter()
        .map(|&(lo, hi, tag)| {
            let probability = if hi > lo { interval_probability(&post, Interval::new(lo, hi)?)? } else { 0.0 };
            Ok(IntervalScore { lo, hi, tag, probability, score: probability })
        })
        .collect()
}

/// TPI under 0-1 loss: the most probable interval wins.
pub fn tpi_decide(target: &TargetSpec, k1: f64, k2: f64, tally: DoseTally) -> Result<Decision> {
    tpi_decide_with_prior(target, k1, k2, BetaPrior::default(), tally)
}

pub fn tpi_decide_with_prior(target: &TargetSpec, k1: f64, k2: f64, prior: BetaPrior, tally: DoseTally) -> Result<Decision> {
    if !(k1 > 0.0 && k2 > 0.0) {
        return Err(crate::error::Error::param("TPI constants K1, K2 must be positive"));
    }
    if tally.n == 0 {
        return Ok(Decision::Stay);
    }
    Ok(argmax_safest(&tpi_scores(target, k1, k2, prior, tally)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target() -> TargetSpec {
        TargetSpec::symmetric(0.3, 0.05).unwrap()
    }

    fn t(x: u32, n: u32) -> DoseTally {
        DoseTally::new(x, n).unwrap()
    }

    #[test]
    fn mtpi_published_decisions() {
        let tg = target();
        assert_eq!(mtpi_decide(&tg, t(3, 6)).unwrap(), Decision::Stay);
        assert_eq!(mtpi_decide(&tg, t(4, 8)).unwrap(), Decision::DeEscalate);
        assert_eq!(mtpi_decide(&tg, t(5, 10)).unwrap(), Decision::DeEscalate);
        assert_eq!(mtpi_decide(&tg, t(0, 0)).unwrap(), Decision::Stay);
    }

    #[test]
    fn mtpi2_partition_tiles() {
        let tiles = mtpi2_partition(&target()).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        let s = tiles.iter().position(|(_, d)| *d == Decision::Stay).unwrap();
        assert!(close(tiles[s].0.lo, 0.25) && close(tiles[s].0.hi, 0.35));
        assert!(close(tiles[s + 1].0.lo, 0.35) && close(tiles[s + 1].0.hi, 0.45));
        assert!(close(tiles[s + 2].0.lo, 0.45) && close(tiles[s + 2].0.hi, 0.55));
        let ui: Vec<_> = tiles[..s].iter().map(|(iv, _)| (iv.lo, iv.hi)).collect();
        assert_eq!(ui.len(), 3);
        assert!(close(ui[0].0, 0.0) && close(ui[0].1, 0.05));
        assert!(close(ui[1].0, 0.05) && close(ui[1].1, 0.15));
        assert!(close(ui[2].0, 0.15) && close(ui[2].1, 0.25));
        let total: f64 = tiles.iter().map(|(iv, _)| iv.len()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(close(tiles.last().unwrap().0.hi, 1.0));
        assert!(close(tiles.last().unwrap().0.len(), 0.05));
    }

    #[test]
    fn mtpi2_decisions() {
        let tg = target();
        assert_eq!(mtpi2_decide(&tg, t(1, 3)).unwrap(), Decision::Stay);
        assert_eq!(mtpi2_decide(&tg, t(0, 3)).unwrap(), Decision::Escalate);
        assert_eq!(mtpi2_decide(&tg, t(3, 6)).unwrap(), Decision::DeEscalate);
    }

    #[test]
    fn tpi_decisions() {
        let tg = target();
        assert_eq!(tpi_decide(&tg, 1.0, 1.5, t(3, 3)).unwrap(), Decision::DeEscalate);
        // No data: the convention is Stay (the EI also carries the largest
        // probability, 0.72, for the uniform posterior).
        assert_eq!(tpi_decide(&tg, 1.0, 1.5, t(0, 0)).unwrap(), Decision::Stay);
        let s = tpi_scores(&tg, 1.0, 1.5, BetaPrior::default(), t(0, 0)).unwrap();
        assert!((s[1].lo - (0.3 - libm::sqrt(1.0 / 12.0))).abs() < 1e-12);
        assert!(s[1].probability > s[0].probability && s[1].probability > s[2].probability);
        assert!(tpi_decide(&tg, 0.0, 1.5, t(1, 3)).is_err());
    }

    #[test]
    fn ties_go_to_the_safer_decision() {
        let mk = |tag, score| IntervalScore { lo: 0.0, hi: 1.0, tag, probability: score, score };
        let scores = [mk(Decision::Escalate, 1.0), mk(Decision::Stay, 1.0), mk(Decision::DeEscalate, 1.0)];
        assert_eq!(argmax_safest(&scores), Decision::DeEscalate);
        let scores = [mk(Decision::Escalate, 2.0), mk(Decision::Stay, 1.0), mk(Decision::DeEscalate, 1.0)];
        assert_eq!(argmax_safest(&scores), Decision::Escalate);
    }
}
