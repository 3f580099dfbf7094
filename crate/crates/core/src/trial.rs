//! Trial state and the per-cohort transition shared by the simulator and
//! live trial conduct.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::crm::{crm_posterior, crm_relative_decision, TrialData};
use crate::design::{three_plus_three_decide, Decision, Design, DoseTally, Family, ThreePlusThreeStep};
use crate::error::{Error, Result};
use crate::selection::{select_mtd, SELECTION_PRIOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The sample size was exhausted.
    MaxN,
    /// The lowest dose was excluded as too toxic.
    SafetyStop,
    /// The design ended the trial itself (3+3 declared an MTD).
    DesignComplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum TrialStatus {
    Active,
    Stopped(StopReason),
}

/// One treated cohort and the decision that followed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub dose: usize,
    pub dlt: u32,
    pub size: u32,
    /// Cumulative tally at `dose` after this cohort.
    pub tally: DoseTally,
    pub decision: Decision,
    /// Dose for the next cohort; `None` once the trial has ended.
    pub next_dose: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub data: TrialData,
    pub treated: u32,
    pub max_n: u32,
    pub status: TrialStatus,
    /// MTD declared by the design itself (3+3): `Some(None)` means "no MTD".
    pub declared: Option<Option<usize>>,
}

impl TrialState {
    pub fn new(n_doses: usize, start_dose: usize, max_n: u32) -> Result<Self> {
        if n_doses == 0 || start_dose >= n_doses {
            return Err(Error::config("start dose must be one of the doses"));
        }
        Ok(TrialState { data: TrialData::new(n_doses, start_dose), treated: 0, max_n, status: TrialStatus::Active, declared: None })
    }

    pub fn n_doses(&self) -> usize {
        self.data.tallies.len()
    }

    pub fn current(&self) -> usize {
        self.data.current
    }

    pub fn is_active(&self) -> bool {
        self.status == TrialStatus::Active
    }

    fn exclude_from(&mut self, dose: usize) {
        for e in &mut self.data.excluded[dose..] {
            *e = true;
        }
    }

    fn stop(&mut self, reason: StopReason) {
        self.status = TrialStatus::Stopped(reason);
    }

    /// Records `dlt` toxicities among `size` patients at the current dose,
    /// applies the design's rule and moves to the next dose.
    ///
    /// Escalation is capped at the top dose and never enters an excluded
    /// dose; de-escalation is capped at the lowest dose unless the safety
    /// rule stops the trial.
    pub fn apply_cohort(&mut self, design: &Design, dlt: u32, size: u32) -> Result<CohortRecord> {
        if !self.is_active() {
            return Err(Error::config("trial is no longer active"));
        }
        if size == 0 || dlt > size {
            return Err(Error::param(alloc::format!("invalid cohort outcome: {dlt} DLTs among {size} patients")));
        }
        if self.treated + size > self.max_n {
            return Err(Error::config(alloc::format!(
                "cohort of {size} would exceed the sample size {} ({} already treated)",
                self.max_n,
                self.treated
            )));
        }
        let dose = self.current();
        let k = self.n_doses();
        self.data.tallies[dose].add(dlt, size);
        self.treated += size;
        let tally = self.data.tallies[dose];

        let decision = match &design.spec().family {
            Family::ThreePlusThree => self.three_plus_three_step(dose)?,
            Family::Crm { model, no_skip } => {
                if model.n_doses() != k {
                    return Err(Error::config("CRM skeleton length differs from the number of doses"));
                }
                let mut safety_stop = false;
                if design.safety_fires(tally)? {
                    self.exclude_from(dose);
                    safety_stop = dose == 0;
                }
                if safety_stop {
                    self.stop(StopReason::SafetyStop);
                    Decision::StopTrial
                } else {
                    let means = crm_posterior(model, &self.data.tallies)?.mean;
                    match crate::crm::closest_eligible(&means, &self.data, design.target().p_t, *no_skip) {
                        Some(next) => {
                            let d = crm_relative_decision(dose, next);
                            self.data.current = next;
                            if self.data.excluded[dose] { Decision::DeEscalateAndExclude } else { d }
                        }
                        None => {
                            self.stop(StopReason::SafetyStop);
                            Decision::StopTrial
                        }
                    }
                }
            }
            _ => match design.decide(tally)? {
                Decision::DeEscalateAndExclude | Decision::StopTrial => {
                    self.exclude_from(dose);
                    if dose == 0 {
                        self.stop(StopReason::SafetyStop);
                        Decision::StopTrial
                    } else {
                        self.data.current = dose - 1;
                        Decision::DeEscalateAndExclude
                    }
                }
                Decision::Escalate if dose + 1 < k && !self.data.excluded[dose + 1] => {
                    self.data.current = dose + 1;
                    Decision::Escalate
                }
                Decision::DeEscalate if dose > 0 => {
                    self.data.current = dose - 1;
                    Decision::DeEscalate
                }
                _ => Decision::Stay,
            },
        };

        if self.is_active() && self.treated >= self.max_n {
            self.stop(StopReason::MaxN);
        }
        let next_dose = self.is_active().then_some(self.current());
        Ok(CohortRecord { dose, dlt, size, tally, decision, next_dose })
    }

    fn three_plus_three_step(&mut self, dose: usize) -> Result<Decision> {
        let step = three_plus_three_decide(&self.data.tallies, &self.data.excluded, dose)?;
        Ok(match step {
            ThreePlusThreeStep::Escalate => {
                self.data.current = dose + 1;
                Decision::Escalate
            }
            ThreePlusThreeStep::Stay => Decision::Stay,
            ThreePlusThreeStep::DeEscalateAndExclude => {
                self.exclude_from(dose);
                self.data.current = dose - 1;
                Decision::DeEscalateAndExclude
            }
            ThreePlusThreeStep::ExcludeAndDeclare(mtd) => {
                self.exclude_from(dose);
                self.data.current = mtd;
                self.declared = Some(Some(mtd));
                self.stop(StopReason::DesignComplete);
                Decision::DeEscalateAndExclude
            }
            ThreePlusThreeStep::Declare(mtd) => {
                self.declared = Some(Some(mtd));
                self.stop(StopReason::DesignComplete);
                Decision::Stay
            }
            ThreePlusThreeStep::StopNoMtd => {
                self.exclude_from(dose);
                self.declared = Some(None);
                self.stop(StopReason::SafetyStop);
                Decision::StopTrial
            }
        })
    }

    /// Final MTD recommendation.
    ///
    /// Fixed-rule designs use isotonic selection under [`SELECTION_PRIOR`]. 3+3 reports its declared
    /// MTD, or when the sample size ran out first the highest open dose
    /// with an empirical rate below 1/3. CRM picks the tried, open dose
    /// whose posterior mean is closest to p_T.
    pub fn select(&self, design: &Design) -> Result<Option<usize>> {
        if self.status == TrialStatus::Stopped(StopReason::SafetyStop) {
            return Ok(None);
        }
        let tallies = &self.data.tallies;
        let open = |i: usize| tallies[i].n > 0 && !self.data.excluded[i];
        match &design.spec().family {
            Family::ThreePlusThree => Ok(match self.declared {
                Some(d) => d,
                None => (0..tallies.len()).rev().find(|&i| open(i) && 3 * tallies[i].x < tallies[i].n),
            }),
            Family::Crm { model, .. } => {
                let means = crm_posterior(model, tallies)?.mean;
                let p_t = design.target().p_t;
                let mut best: Option<(usize, f64)> = None;
                for i in (0..tallies.len()).filter(|&i| open(i)) {
                    let dist = (means[i] - p_t).abs();
                    if best.is_none_or(|(_, b)| dist < b - 1e-15) {
                        best = Some((i, dist));
                    }
                }
                Ok(best.map(|(i, _)| i))
            }
            _ => Ok(select_mtd(tallies, &self.data.excluded, design.target(), SELECTION_PRIOR)?.selected),
        }
    }

    pub fn patients_per_dose(&self) -> Vec<u32> {
        self.data.tallies.iter().map(|t| t.n).collect()
    }
}
