//! Design requests as they arrive from the command line, JSON bodies and
//! batch files. A request names a design and may leave the target and the
//! CRM skeleton open; [`DesignConfig::instantiate`] fills them in from a
//! scenario.

use dosefind_core::crm::{CrmModel, DEFAULT_PRIOR_SD};
use dosefind_core::design::{TPI_K1, TPI_K2};
use dosefind_core::{BetaPrior, BoinVariant, DesignSpec, Family, SafetyRule, TargetSpec};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const DESIGN_NAMES: [&str; 9] =
    ["tpi", "mtpi", "mtpi2", "ccd", "boin-default", "boin-epsilon", "boin-lambda", "crm", "3+3"];

pub const DEFAULT_EPS: f64 = 0.05;

pub(crate) fn default_eps() -> f64 {
    DEFAULT_EPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub design: String,
    /// Taken from the scenario when absent.
    #[serde(rename = "p_T", default, skip_serializing_if = "Option::is_none")]
    pub p_t: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps1: f64,
    #[serde(default = "default_eps")]
    pub eps2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<BetaPrior>,
    /// Turns the exclusion rule on or off; the family default otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_min_n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_skip: Option<bool>,
}

impl DesignConfig {
    pub fn named(design: &str) -> Self {
        DesignConfig {
            design: design.to_string(),
            p_t: None,
            eps1: DEFAULT_EPS,
            eps2: DEFAULT_EPS,
            prior: None,
            safety: None,
            safety_threshold: None,
            safety_min_n: None,
            delta: None,
            k1: None,
            k2: None,
            skeleton: None,
            prior_sd: None,
            no_skip: None,
        }
    }

    pub fn with_target(mut self, p_t: f64, eps1: f64, eps2: f64) -> Self {
        self.p_t = Some(p_t);
        self.eps1 = eps1;
        self.eps2 = eps2;
        self
    }

    pub fn with_eps(mut self, eps1: f64, eps2: f64) -> Self {
        self.eps1 = eps1;
        self.eps2 = eps2;
        self
    }

    fn family(&self, n_doses: Option<usize>) -> AppResult<Family> {
        Ok(match self.design.to_ascii_lowercase().as_str() {
            "tpi" => Family::Tpi { k1: self.k1.unwrap_or(TPI_K1), k2: self.k2.unwrap_or(TPI_K2) },
            "mtpi" => Family::Mtpi,
            "mtpi2" | "mtpi-2" => Family::Mtpi2,
            "ccd" => Family::Ccd { delta: self.delta },
            "boin" | "boin-default" => Family::Boin { variant: BoinVariant::Default },
            "boin-epsilon" => Family::Boin { variant: BoinVariant::Epsilon },
            "boin-lambda" => Family::Boin { variant: BoinVariant::Lambda },
            "3+3" | "3plus3" => Family::ThreePlusThree,
            "crm" => {
                let prior_sd = self.prior_sd.unwrap_or(DEFAULT_PRIOR_SD);
                let model = match (&self.skeleton, n_doses) {
                    (Some(s), _) => CrmModel::new(s.clone(), prior_sd)?,
                    (None, Some(k)) => CrmModel::new(CrmModel::default_for(k).skeleton, prior_sd)?,
                    (None, None) => {
                        return Err(AppError::BadRequest("crm needs a skeleton or a dose count".into()));
                    }
                };
                Family::Crm { model, no_skip: self.no_skip.unwrap_or(true) }
            }
            other => {
                return Err(AppError::BadRequest(format!(
                    "unknown design '{other}' (expected one of {})",
                    DESIGN_NAMES.join(", ")
                )))
            }
        })
    }

    /// The concrete design for a target of `p_t` (unless the request fixes
    /// its own) on `n_doses` doses.
    pub fn instantiate(&self, p_t: Option<f64>, n_doses: Option<usize>) -> AppResult<DesignSpec> {
        let p_t = self
            .p_t
            .or(p_t)
            .ok_or_else(|| AppError::BadRequest(format!("design '{}' needs p_T", self.design)))?;
        let target = TargetSpec::new(p_t, self.eps1, self.eps2)?;
        let family = self.family(n_doses)?;
        let mut spec = DesignSpec::new(family, target);
        if let Some(prior) = self.prior {
            spec = spec.with_prior(BetaPrior::new(prior.a, prior.b)?);
        }
        let enabled = self.safety.unwrap_or(
            spec.safety.is_some() || self.safety_threshold.is_some() || self.safety_min_n.is_some(),
        );
        let rule = if enabled {
            let d = SafetyRule::default();
            Some(SafetyRule::new(self.safety_threshold.unwrap_or(d.threshold), self.safety_min_n.unwrap_or(d.min_n))?)
        } else {
            None
        };
        spec = spec.with_safety(rule);
        spec.compile()?;
        Ok(spec)
    }
}

/// Splits `mtpi,mtpi2,boin-lambda` into configs sharing the given margins.
pub fn parse_design_list(list: &str, eps1: f64, eps2: f64) -> AppResult<Vec<DesignConfig>> {
    let designs: Vec<DesignConfig> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| DesignConfig::named(s).with_eps(eps1, eps2))
        .collect();
    if designs.is_empty() {
        return Err(AppError::BadRequest("no designs given".into()));
    }
    for d in &designs {
        d.family(Some(2))?;
    }
    Ok(designs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_through_specs() {
        for name in DESIGN_NAMES {
            let spec = DesignConfig::named(name).instantiate(Some(0.3), Some(6)).unwrap();
            assert_eq!(spec.name(), name);
        }
    }

    #[test]
    fn safety_overrides() {
        let off = DesignConfig { safety: Some(false), ..DesignConfig::named("mtpi2") };
        assert_eq!(off.instantiate(Some(0.3), None).unwrap().safety, None);
        let crm = DesignConfig::named("crm").instantiate(Some(0.3), Some(5)).unwrap();
        assert_eq!(crm.safety, None);
        let custom = DesignConfig { safety_threshold: Some(0.9), ..DesignConfig::named("crm") };
        assert_eq!(custom.instantiate(Some(0.3), Some(5)).unwrap().safety.unwrap().threshold, 0.9);
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(DesignConfig::named("bogus").instantiate(Some(0.3), None).is_err());
        assert!(DesignConfig::named("mtpi").instantiate(None, None).is_err());
        assert!(DesignConfig::named("crm").instantiate(Some(0.3), None).is_err());
        assert!(DesignConfig::named("ccd").instantiate(Some(0.27), None).is_err());
        assert!(parse_design_list("mtpi, nope", 0.05, 0.05).is_err());
        assert_eq!(parse_design_list("mtpi,3+3", 0.05, 0.05).unwrap().len(), 2);
    }

    #[test]
    fn json_shape() {
        let c: DesignConfig = serde_json::from_str(r#"{"design":"mtpi2","p_T":0.3,"eps1":0.05,"eps2":0.05}"#).unwrap();
        assert_eq!(c.p_t, Some(0.3));
        assert!(serde_json::from_str::<DesignConfig>(r#"{"design":"mtpi2","pt":0.3}"#).is_err());
    }
}
