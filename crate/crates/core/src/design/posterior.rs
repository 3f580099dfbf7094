use serde::{Deserialize, Serialize};

use super::types::{BetaPrior, DoseTally, Interval};
use crate::error::{Error, Result};
use crate::special::reg_inc_beta;

/// Beta(alpha, beta) posterior of a dose's toxicity probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPosterior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::param("beta parameters must be positive"));
        }
        Ok(BetaPosterior { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn sd(&self) -> f64 {
        let s = self.alpha + self.beta;
        libm::sqrt(self.alpha * self.beta / (s * s * (s + 1.0)))
    }

    pub fn cdf(&self, p: f64) -> Result<f64> {
        reg_inc_beta(self.alpha, self.beta, p)
    }
}

/// Conjugate update of `prior` with the tally.
pub fn posterior(tally: DoseTally, prior: BetaPrior) -> Result<BetaPosterior> {
    let prior = BetaPrior::new(prior.a, prior.b)?;
    if tally.x > tally.n {
        return Err(Error::param("DLT count exceeds patients"));
    }
    BetaPosterior::new(prior.a + tally.x as f64, prior.b + (tally.n - tally.x) as f64)
}

/// Posterior probability that p lies in the interval.
pub fn interval_probability(post: &BetaPosterior, iv: Interval) -> Result<f64> {
    let hi = post.cdf(iv.hi)?;
    let lo = post.cdf(iv.lo)?;
    Ok((hi - lo).max(0.0))
}

/// Unit probability mass: interval probability divided by interval length.
pub fn upm(post: &BetaPosterior, iv: Interval) -> Result<f64> {
    let len = iv.len();
    if len <= 0.0 {
        return Err(Error::param("unit probability mass of a zero-length interval"));
    }
    Ok(interval_probability(post, iv)? / len)
}
