//! Boundary designs: CCD and (local) BOIN compare the empirical rate x/n
//! against fixed cutoffs.

use serde::{Deserialize, Serialize};

use super::types::{Decision, DoseTally, TargetSpec, BOUNDARY_TOL};
use crate::error::{Error, Result};

/// Recommended CCD half-widths for six doses and moderate sample sizes.
const CCD_DELTAS: [(f64, f64); 9] = [
    (0.10, 0.09),
    (0.15, 0.09),
    (0.20, 0.09),
    (0.25, 0.09),
    (0.30, 0.10),
    (0.35, 0.10),
    (0.40, 0.12),
    (0.45, 0.13),
    (0.50, 0.13),
];

/// Tabulated CCD Δ for `p_t`; other targets need an explicit override.
pub fn ccd_delta(p_t: f64) -> Result<f64> {
    CCD_DELTAS
        .iter()
        .find(|(p, _)| (p - p_t).abs() < BOUNDARY_TOL)
        .map(|&(_, d)| d)
        .ok_or(Error::DeltaRequired(p_t))
}

/// CCD: escalate below p_T - Δ, de-escalate above p_T + Δ, otherwise stay.
/// A rate equal to either cutoff stays.
pub fn ccd_decide(p_t: f64, delta: f64, tally: DoseTally) -> Decision {
    let Some(rate) = tally.rate() else {
        return Decision::Stay;
    };
    if rate < p_t - delta - BOUNDARY_TOL {
        Decision::Escalate
    } else if rate > p_t + delta + BOUNDARY_TOL {
        Decision::DeEscalate
    } else {
        Decision::Stay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoinBoundaries {
    pub phi1: f64,
    pub phi2: f64,
    pub lambda_e: f64,
    pub lambda_d: f64,
}

/// How the BOIN equivalence boundaries are specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoinVariant {
    /// φ1 = 0.6 p_T, φ2 = 1.4 p_T.
    Default,
    /// φ1 = p_T - ε1, φ2 = p_T + ε2.
    Epsilon,
    /// λe = p_T - ε1, λd = p_T + ε2 used directly.
    Lambda,
}

fn lambda_e(p_t: f64, phi1: f64) -> f64 {
    libm::log((1.0 - phi1) / (1.0 - p_t)) / libm::log(p_t * (1.0 - phi1) / (phi1 * (1.0 - p_t)))
}

fn lambda_d(p_t: f64, phi2: f64) -> f64 {
    libm::log((1.0 - p_t) / (1.0 - phi2)) / libm::log(phi2 * (1.0 - p_t) / (p_t * (1.0 - phi2)))
}

/// Local BOIN escalation and de-escalation boundaries for (φ1, φ2).
pub fn boin_boundaries(p_t: f64, phi1: f64, phi2: f64) -> Result<BoinBoundaries> {
    if !(0.0 < phi1 && phi1 < p_t && p_t < phi2 && phi2 < 1.0) {
        return Err(Error::param(alloc::format!(
            "BOIN needs 0 < phi1 < p_T < phi2 < 1, got ({phi1}, {p_t}, {phi2})"
        )));
    }
    Ok(BoinBoundaries { phi1, phi2, lambda_e: lambda_e(p_t, phi1), lambda_d: lambda_d(p_t, phi2) })
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo * fhi > 0.0 {
        return Err(Error::computation("root not bracketed"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Recovers (φ1, φ2) whose BOIN boundaries are (λe, λd), by bisection on
/// each boundary map (λe is increasing in φ1 on (0, p_T), λd in φ2 on
/// (p_T, 1)).
pub fn boin_inverse(p_t: f64, lambda_e_target: f64, lambda_d_target: f64) -> Result<(f64, f64)> {
    if !(0.0 < lambda_e_target && lambda_e_target < p_t && p_t < lambda_d_target && lambda_d_target < 1.0) {
        return Err(Error::param(alloc::format!(
            "BOIN inverse needs 0 < lambda_e < p_T < lambda_d < 1, got ({lambda_e_target}, {p_t}, {lambda_d_target})"
        )));
    }
    let edge = 1e-12;
    let phi1 = bisect(edge, p_t - edge, |phi| lambda_e(p_t, phi) - lambda_e_target)
        .map_err(|_| Error::computation("no phi1 in (0, p_T) for the requested lambda_e"))?;
    let phi2 = bisect(p_t + edge, 1.0 - edge, |phi| lambda_d(p_t, phi) - lambda_d_target)
        .map_err(|_| Error::computation("no phi2 in (p_T, 1) for the requested lambda_d"))?;
    Ok((phi1, phi2))
}

/// Boundaries for one of the three BOIN parameterizations.
pub fn boin_variant_bounds(variant: BoinVariant, target: &TargetSpec) -> Result<BoinBoundaries> {
    let p_t = target.p_t;
    match variant {
        BoinVariant::Default => boin_boundaries(p_t, 0.6 * p_t, 1.4 * p_t),
        BoinVariant::Epsilon => boin_boundaries(p_t, target.lower(), target.upper()),
        BoinVariant::Lambda => {
            let (phi1, phi2) = boin_inverse(p_t, target.lower(), target.upper())?;
            Ok(BoinBoundaries { phi1, phi2, lambda_e: target.lower(), lambda_d: target.upper() })
        }
    }
}

/// BOIN: escalate if x/n ≤ λe, de-escalate if x/n ≥ λd, otherwise stay.
pub fn boin_decide(bounds: &BoinBoundaries, tally: DoseTally) -> Decision {
    let Some(rate) = tally.rate() else {
        return Decision::Stay;
    };
    if rate <= bounds.lambda_e + BOUNDARY_TOL {
        Decision::Escalate
    } else if rate >= bounds.lambda_d - BOUNDARY_TOL {
        Decision::DeEscalate
    } else {
        Decision::Stay
    }
}
