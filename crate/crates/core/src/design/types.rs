use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Comparison slack for probability boundaries, so that rational
/// estimates such as 1/4 compare equal to 0.3 - 0.05.
pub(crate) const BOUNDARY_TOL: f64 = 1e-9;

/// Default cap on the equivalence margins.
pub const DEFAULT_MARGIN_CAP: f64 = 0.3;

/// Target toxicity probability and the equivalence margins around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    #[serde(rename = "p_T")]
    pub p_t: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl TargetSpec {
    pub fn new(p_t: f64, eps1: f64, eps2: f64) -> Result<Self> {
        Self::with_cap(p_t, eps1, eps2, DEFAULT_MARGIN_CAP)
    }

    pub fn with_cap(p_t: f64, eps1: f64, eps2: f64, cap: f64) -> Result<Self> {
        if !(p_t > 0.0 && p_t < 1.0) {
            return Err(Error::param(alloc::format!("p_T = {p_t} must lie in (0, 1)")));
        }
        if !(eps1 >= 0.0 && eps2 >= 0.0) {
            return Err(Error::param("equivalence margins must be non-negative"));
        }
        if eps1 > cap || eps2 > cap {
            return Err(Error::param(alloc::format!(
                "equivalence margins ({eps1}, {eps2}) exceed the cap {cap}"
            )));
        }
        if p_t - eps1 <= 0.0 || p_t + eps2 >= 1.0 {
            return Err(Error::param(alloc::format!(
                "equivalence interval ({}, {}) must lie inside (0, 1)",
                p_t - eps1,
                p_t + eps2
            )));
        }
        Ok(TargetSpec { p_t, eps1, eps2 })
    }

    /// Symmetric margins.
    pub fn symmetric(p_t: f64, eps: f64) -> Result<Self> {
        Self::new(p_t, eps, eps)
    }

    pub fn lower(&self) -> f64 {
        self.p_t - self.eps1
    }

    pub fn upper(&self) -> f64 {
        self.p_t + self.eps2
    }

    pub fn width(&self) -> f64 {
        self.eps1 + self.eps2
    }
}

/// DLT count `x` out of `n` patients treated at a dose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DoseTally {
    pub x: u32,
    pub n: u32,
}

impl DoseTally {
    pub fn new(x: u32, n: u32) -> Result<Self> {
        if x > n {
            return Err(Error::param(alloc::format!("DLT count {x} exceeds patients {n}")));
        }
        Ok(DoseTally { x, n })
    }

    pub fn empty() -> Self {
        DoseTally { x: 0, n: 0 }
    }

    pub fn add(&mut self, dlt: u32, size: u32) {
        self.x += dlt;
        self.n += size;
    }

    /// Empirical rate x/n, `None` when no patient has been treated.
    pub fn rate(&self) -> Option<f64> {
        (self.n > 0).then(|| self.x as f64 / self.n as f64)
    }
}

/// Open probability interval (lo, hi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::param(alloc::format!("invalid interval ({lo}, {hi})")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo < p && p < self.hi
    }
}

/// Per-cohort dose-finding decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "E")]
    Escalate,
    #[serde(rename = "S")]
    Stay,
    #[serde(rename = "D")]
    DeEscalate,
    /// De-escalate and exclude the current dose and everything above it.
    #[serde(rename = "DU")]
    DeEscalateAndExclude,
    #[serde(rename = "STOP")]
    StopTrial,
}

impl Decision {
    pub fn letter(&self) -> &'static str {
        match self {
            Decision::Escalate => "E",
            Decision::Stay => "S",
            Decision::DeEscalate => "D",
            Decision::DeEscalateAndExclude => "DU",
            Decision::StopTrial => "STOP",
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        Some(match s {
            "E" => Decision::Escalate,
            "S" => Decision::Stay,
            "D" => Decision::DeEscalate,
            "DU" => Decision::DeEscalateAndExclude,
            "STOP" => Decision::StopTrial,
            _ => return None,
        })
    }

    /// Score used by decision-table comparisons: E = 1, S = 2, any
    /// de-escalation = 3.
    pub fn score(&self) -> u8 {
        match self {
            Decision::Escalate => 1,
            Decision::Stay => 2,
            Decision::DeEscalate | Decision::DeEscalateAndExclude | Decision::StopTrial => 3,
        }
    }

    pub fn is_exclusion(&self) -> bool {
        matches!(self, Decision::DeEscalateAndExclude | Decision::StopTrial)
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

/// Independent Beta(a, b) prior on each dose's toxicity probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl BetaPrior {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::param(alloc::format!("prior parameters ({a}, {b}) must be positive")));
        }
        Ok(BetaPrior { a, b })
    }
}

impl Default for BetaPrior {
    fn default() -> Self {
        BetaPrior { a: 1.0, b: 1.0 }
    }
}
