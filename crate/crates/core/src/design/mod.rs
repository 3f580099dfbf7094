//! Per-cohort decision engines.
//!
//! [`DesignSpec`] names a design and its parameters; [`DesignSpec::compile`]
//! validates it and precomputes whatever the rule needs (interval
//! partitions, BOIN boundaries, the CCD half-width) into a [`Design`].

mod boundary;
mod idesign;
mod posterior;
mod safety;
mod three_plus_three;
mod types;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use boundary::{
    boin_boundaries, boin_decide, boin_inverse, boin_variant_bounds, ccd_decide, ccd_delta, BoinBoundaries,
    BoinVariant,
};
pub use idesign::{
    mtpi2_decide, mtpi2_decide_on, mtpi2_partition, mtpi2_scores_on, mtpi_decide, mtpi_decide_with_prior,
    mtpi_intervals, mtpi_scores, tpi_decide, tpi_decide_with_prior, tpi_scores, IntervalScore,
};
pub use posterior::{interval_probability, posterior, upm, BetaPosterior};
pub use safety::{overdose_probability, safety_exclude, safety_exclude_with_prior, SafetyRule};
pub use three_plus_three::{three_plus_three_decide, ThreePlusThreeStep};
pub use types::{BetaPrior, Decision, DoseTally, Interval, TargetSpec, DEFAULT_MARGIN_CAP};

use crate::crm::CrmModel;
use crate::error::{Error, Result};

/// Default TPI constants.
pub const TPI_K1: f64 = 1.0;
pub const TPI_K2: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Tpi {
        k1: f64,
        k2: f64,
    },
    Mtpi,
    Mtpi2,
    Ccd {
        /// Overrides the tabulated half-width.
        delta: Option<f64>,
    },
    Boin {
        variant: BoinVariant,
    },
    #[serde(rename = "3+3")]
    ThreePlusThree,
    Crm {
        model: CrmModel,
        no_skip: bool,
    },
}

impl Family {
    /// Families whose decision depends only on the current dose's tally.
    pub fn is_fixed_rule(&self) -> bool {
        !matches!(self, Family::ThreePlusThree | Family::Crm { .. })
    }

    /// Whether the dose-exclusion safety rule is on by default.
    pub fn default_safety(&self) -> bool {
        matches!(self, Family::Tpi { .. } | Family::Mtpi | Family::Mtpi2 | Family::Boin { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub family: Family,
    pub target: TargetSpec,
    #[serde(default)]
    pub prior: BetaPrior,
    /// `None` disables the dose-exclusion rule.
    pub safety: Option<SafetyRule>,
}

impl DesignSpec {
    /// A design with the family's default prior and safety rule.
    pub fn new(family: Family, target: TargetSpec) -> Self {
        let safety = family.default_safety().then(SafetyRule::default);
        DesignSpec { family, target, prior: BetaPrior::default(), safety }
    }

    pub fn tpi(target: TargetSpec) -> Self {
        Self::new(Family::Tpi { k1: TPI_K1, k2: TPI_K2 }, target)
    }

    pub fn mtpi(target: TargetSpec) -> Self {
        Self::new(Family::Mtpi, target)
    }

    pub fn mtpi2(target: TargetSpec) -> Self {
        Self::new(Family::Mtpi2, target)
    }

    pub fn ccd(target: TargetSpec) -> Self {
        Self::new(Family::Ccd { delta: None }, target)
    }

    pub fn boin(variant: BoinVariant, target: TargetSpec) -> Self {
        Self::new(Family::Boin { variant }, target)
    }

    pub fn three_plus_three(target: TargetSpec) -> Self {
        Self::new(Family::ThreePlusThree, target)
    }

    pub fn crm(model: CrmModel, target: TargetSpec) -> Self {
        Self::new(Family::Crm { model, no_skip: true }, target)
    }

    pub fn with_safety(mut self, safety: Option<SafetyRule>) -> Self {
        self.safety = safety;
        self
    }

    pub fn with_prior(mut self, prior: BetaPrior) -> Self {
        self.prior = prior;
        self
    }

    /// Short identifier, e.g. `mtpi2` or `boin-lambda`.
    pub fn name(&self) -> String {
        match &self.family {
            Family::Tpi { .. } => "tpi".into(),
            Family::Mtpi => "mtpi".into(),
            Family::Mtpi2 => "mtpi2".into(),
            Family::Ccd { .. } => "ccd".into(),
            Family::Boin { variant } => match variant {
                BoinVariant::Default => "boin-default".into(),
                BoinVariant::Epsilon => "boin-epsilon".into(),
                BoinVariant::Lambda => "boin-lambda".into(),
            },
            Family::ThreePlusThree => "3+3".into(),
            Family::Crm { .. } => "crm".into(),
        }
    }

    pub fn compile(&self) -> Result<Design> {
        let target = TargetSpec::with_cap(self.target.p_t, self.target.eps1, self.target.eps2, 1.0)?;
        BetaPrior::new(self.prior.a, self.prior.b)?;
        if let Some(rule) = self.safety {
            SafetyRule::new(rule.threshold, rule.min_n)?;
        }
        let needs_ei = matches!(self.family, Family::Mtpi | Family::Mtpi2 | Family::Boin { variant: BoinVariant::Epsilon | BoinVariant::Lambda });
        if needs_ei && target.width() <= 0.0 {
            return Err(Error::config(format!("{} needs a non-empty equivalence interval", self.name())));
        }
        let rule = match &self.family {
            Family::Tpi { k1, k2 } => {
                if !(*k1 > 0.0 && *k2 > 0.0) {
                    return Err(Error::config("TPI constants K1, K2 must be positive"));
                }
                Rule::Tpi { k1: *k1, k2: *k2 }
            }
            Family::Mtpi => Rule::Mtpi { intervals: mtpi_intervals(&target)? },
            Family::Mtpi2 => Rule::Mtpi2 { tiles: mtpi2_partition(&target)? },
            Family::Ccd { delta } => {
                let delta = match delta {
                    Some(d) => *d,
                    None => ccd_delta(target.p_t)?,
                };
                if !(delta > 0.0 && delta < target.p_t && target.p_t + delta < 1.0) {
                    return Err(Error::config(format!("CCD delta {delta} out of range for p_T = {}", target.p_t)));
                }
                Rule::Ccd { delta }
            }
            Family::Boin { variant } => Rule::Boin { bounds: boin_variant_bounds(*variant, &target)? },
            Family::ThreePlusThree => Rule::ThreePlusThree,
            Family::Crm { model, .. } => {
                model.validate()?;
                Rule::Crm
            }
        };
        Ok(Design { spec: self.clone(), rule, cache: None })
    }
}

#[derive(Debug, Clone)]
enum Rule {
    Tpi { k1: f64, k2: f64 },
    Mtpi { intervals: [(Interval, Decision); 3] },
    Mtpi2 { tiles: Vec<(Interval, Decision)> },
    Ccd { delta: f64 },
    Boin { bounds: BoinBoundaries },
    ThreePlusThree,
    Crm,
}

/// Why a fixed-rule design made its decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub tally: DoseTally,
    pub decision: Decision,
    /// The rule's decision before the safety overlay.
    pub rule_decision: Decision,
    pub overdose_probability: Option<f64>,
    pub safety_fired: bool,
    /// Scored intervals (TPI family).
    pub intervals: Vec<IntervalScore>,
    /// Escalation / de-escalation cutoffs on x/n (CCD, BOIN).
    pub boundaries: Option<(f64, f64)>,
    pub rate: Option<f64>,
}

/// A validated, ready-to-run design.
#[derive(Debug, Clone)]
pub struct Design {
    spec: DesignSpec,
    rule: Rule,
    cache: Option<(u32, Vec<Decision>)>,
}

fn cell_index(x: u32, n: u32) -> usize {
    (n as usize * (n as usize + 1)) / 2 + x as usize
}

impl Design {
    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn name(&self) -> String {
        self.spec.name()
    }

    pub fn target(&self) -> &TargetSpec {
        &self.spec.target
    }

    pub fn is_fixed_rule(&self) -> bool {
        self.spec.family.is_fixed_rule()
    }

    pub fn boin_bounds(&self) -> Option<&BoinBoundaries> {
        match &self.rule {
            Rule::Boin { bounds } => Some(bounds),
            _ => None,
        }
    }

    pub fn ccd_delta(&self) -> Option<f64> {
        match self.rule {
            Rule::Ccd { delta } => Some(delta),
            _ => None,
        }
    }

    pub fn crm_model(&self) -> Option<(&CrmModel, bool)> {
        match &self.spec.family {
            Family::Crm { model, no_skip } => Some((model, *no_skip)),
            _ => None,
        }
    }

    fn not_fixed(&self) -> Error {
        Error::config(format!(
            "{} has no fixed per-tally rule; its decisions depend on the whole trial state",
            self.name()
        ))
    }

    /// The rule's E/S/D decision, without the safety overlay.
    pub fn rule_decision(&self, tally: DoseTally) -> Result<Decision> {
        let tally = DoseTally::new(tally.x, tally.n)?;
        let target = &self.spec.target;
        let prior = self.spec.prior;
        match &self.rule {
            Rule::Tpi { k1, k2 } => tpi_decide_with_prior(target, *k1, *k2, prior, tally),
            Rule::Mtpi { .. } => mtpi_decide_with_prior(target, prior, tally),
            Rule::Mtpi2 { tiles } => mtpi2_decide_on(tiles, prior, tally),
            Rule::Ccd { delta } => Ok(ccd_decide(target.p_t, *delta, tally)),
            Rule::Boin { bounds } => Ok(boin_decide(bounds, tally)),
            Rule::ThreePlusThree | Rule::Crm => Err(self.not_fixed()),
        }
    }

    /// Whether the dose-exclusion rule fires for this tally.
    pub fn safety_fires(&self, tally: DoseTally) -> Result<bool> {
        match self.spec.safety {
            Some(rule) => safety_exclude_with_prior(&self.spec.target, self.spec.prior, tally, rule),
            None => Ok(false),
        }
    }

    /// Decision with the safety overlay: `DeEscalateAndExclude` when the
    /// exclusion rule fires, otherwise the rule's decision.
    pub fn decide(&self, tally: DoseTally) -> Result<Decision> {
        if let Some((n_max, cells)) = &self.cache {
            if tally.n <= *n_max && tally.x <= tally.n {
                return Ok(cells[cell_index(tally.x, tally.n)]);
            }
        }
        self.decide_uncached(tally)
    }

    fn decide_uncached(&self, tally: DoseTally) -> Result<Decision> {
        let rule = self.rule_decision(tally)?;
        if self.safety_fires(tally)? {
            return Ok(Decision::DeEscalateAndExclude);
        }
        Ok(rule)
    }

    /// Precomputes every decision for n ≤ `n_max`.
    pub fn with_cache(mut self, n_max: u32) -> Result<Self> {
        if !self.is_fixed_rule() {
            return Ok(self);
        }
        let mut cells = Vec::with_capacity(cell_index(0, n_max + 1));
        for n in 0..=n_max {
            for x in 0..=n {
                cells.push(self.decide_uncached(DoseTally { x, n })?);
            }
        }
        self.cache = Some((n_max, cells));
        Ok(self)
    }

    pub fn explain(&self, tally: DoseTally) -> Result<Diagnostics> {
        let rule_decision = self.rule_decision(tally)?;
        let target = &self.spec.target;
        let prior = self.spec.prior;
        let safety_fired = self.safety_fires(tally)?;
        let overdose_probability = match self.spec.safety {
            Some(_) => Some(overdose_probability(target.p_t, prior, tally)?),
            None => None,
        };
        let (intervals, boundaries) = match &self.rule {
            Rule::Tpi { k1, k2 } => (tpi_scores(target, *k1, *k2, prior, tally)?, None),
            Rule::Mtpi { intervals } => (mtpi2_scores_on(intervals, prior, tally)?, None),
            Rule::Mtpi2 { tiles } => (mtpi2_scores_on(tiles, prior, tally)?, None),
            Rule::Ccd { delta } => (Vec::new(), Some((target.p_t - delta, target.p_t + delta))),
            Rule::Boin { bounds } => (Vec::new(), Some((bounds.lambda_e, bounds.lambda_d))),
            Rule::ThreePlusThree | Rule::Crm => return Err(self.not_fixed()),
        };
        Ok(Diagnostics {
            tally,
            decision: if safety_fired { Decision::DeEscalateAndExclude } else { rule_decision },
            rule_decision,
            overdose_probability,
            safety_fired,
            intervals,
            boundaries,
            rate: tally.rate(),
        })
    }
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
    fn safety_overlay() {
        let d = DesignSpec::mtpi2(target()).compile().unwrap();
        assert_eq!(d.decide(t(3, 3)).unwrap(), Decision::DeEscalateAndExclude);
        assert_eq!(d.rule_decision(t(3, 3)).unwrap(), Decision::DeEscalate);
        assert_eq!(d.decide(t(1, 3)).unwrap(), Decision::Stay);
        let ccd = DesignSpec::ccd(target()).compile().unwrap();
        assert_eq!(ccd.decide(t(3, 3)).unwrap(), Decision::DeEscalate);
    }

    #[test]
    fn cache_matches_direct_calls() {
        for spec in [DesignSpec::mtpi(target()), DesignSpec::mtpi2(target()), DesignSpec::boin(BoinVariant::Lambda, target())] {
            let plain = spec.compile().unwrap();
            let cached = spec.compile().unwrap().with_cache(20).unwrap();
            for n in 0..=25 {
                for x in 0..=n {
                    assert_eq!(plain.decide(t(x, n)).unwrap(), cached.decide(t(x, n)).unwrap());
                }
            }
        }
    }

    #[test]
    fn non_fixed_designs_reject_tally_decisions() {
        let d = DesignSpec::three_plus_three(target()).compile().unwrap();
        assert!(matches!(d.decide(t(0, 3)), Err(Error::Config(_))));
    }

    #[test]
    fn ccd_without_tabulated_delta() {
        let tg = TargetSpec::symmetric(0.33, 0.05).unwrap();
        assert_eq!(DesignSpec::ccd(tg).compile().unwrap_err(), Error::DeltaRequired(0.33));
        let spec = DesignSpec::new(Family::Ccd { delta: Some(0.1) }, tg);
        assert_eq!(spec.compile().unwrap().ccd_delta(), Some(0.1));
    }

    #[test]
    fn explain_reports_upms() {
        let d = DesignSpec::mtpi2(target()).compile().unwrap();
        let diag = d.explain(t(3, 6)).unwrap();
        assert_eq!(diag.decision, Decision::DeEscalate);
        let ei = diag.intervals.iter().find(|s| s.tag == Decision::Stay).unwrap();
        assert!((ei.probability - 0.12929).abs() < 1e-4);
        let tile = diag.intervals.iter().find(|s| (s.lo - 0.45).abs() < 1e-12).unwrap();
        assert!(tile.probability > ei.probability);
    }
}
