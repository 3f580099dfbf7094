//! Single-trial simulation and operating-characteristic metrics.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::design::{Design, DoseTally, Family, TargetSpec};
use crate::error::{Error, Result};
use crate::rng::{binomial, StreamId};
use crate::scenarios::Scenario;
use crate::selection::{true_mtd, TrueMtd};
use crate::trial::{CohortRecord, StopReason, TrialState, TrialStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub sample_size: u32,
    pub cohort_size: u32,
    /// 0-based.
    pub start_dose: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub fn new(sample_size: u32, cohort_size: u32) -> Result<Self> {
        let cfg = TrialConfig { sample_size, cohort_size, start_dose: 0, seed: 0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_start_dose(mut self, start_dose: usize) -> Self {
        self.start_dose = start_dose;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cohort_size == 0 || self.sample_size < self.cohort_size {
            return Err(Error::config("need sample_size >= cohort_size >= 1"));
        }
        Ok(())
    }

    /// Patients actually enrolled: only whole cohorts are treated.
    pub fn enrolled_cap(&self) -> u32 {
        self.sample_size / self.cohort_size * self.cohort_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub cohorts: Vec<CohortRecord>,
    pub tallies: Vec<DoseTally>,
    pub excluded: Vec<bool>,
    pub stop_reason: StopReason,
    pub selected: Option<usize>,
}

impl TrialRecord {
    pub fn patients(&self) -> u32 {
        self.tallies.iter().map(|t| t.n).sum()
    }

    pub fn dlts(&self) -> u32 {
        self.tallies.iter().map(|t| t.x).sum()
    }
}

/// Checks that `design` can run on `scenario` under `cfg`.
pub fn check_setup(design: &Design, scenario: &Scenario, cfg: &TrialConfig) -> Result<()> {
    cfg.validate()?;
    scenario.validate()?;
    if cfg.start_dose >= scenario.n_doses() {
        return Err(Error::config("start dose is beyond the highest dose"));
    }
    if let Family::Crm { model, .. } = &design.spec().family {
        if model.n_doses() != scenario.n_doses() {
            return Err(Error::config(alloc::format!(
                "CRM skeleton has {} doses but scenario '{}' has {}",
                model.n_doses(),
                scenario.label,
                scenario.n_doses()
            )));
        }
    }
    if matches!(design.spec().family, Family::ThreePlusThree) && cfg.cohort_size != 3 {
        return Err(Error::config("3+3 requires cohorts of 3"));
    }
    Ok(())
}

/// Runs one trial. Cohort DLT counts are Binomial(cohort_size, p_dose)
/// draws from `rng`; the trial ends when the next whole cohort would not
/// fit in the sample size, at a safety stop, or when 3+3 finishes.
pub fn simulate_trial<R: RngCore + ?Sized>(design: &Design, scenario: &Scenario, cfg: &TrialConfig, rng: &mut R) -> Result<TrialRecord> {
    check_setup(design, scenario, cfg)?;
    let mut state = TrialState::new(scenario.n_doses(), cfg.start_dose, cfg.enrolled_cap())?;
    let mut cohorts = Vec::with_capacity((cfg.sample_size / cfg.cohort_size) as usize);
    while state.is_active() {
        let dose = state.current();
        let dlt = binomial(rng, cfg.cohort_size, scenario.probs[dose]);
        cohorts.push(state.apply_cohort(design, dlt, cfg.cohort_size)?);
    }
    let stop_reason = match state.status {
        TrialStatus::Stopped(r) => r,
        TrialStatus::Active => StopReason::MaxN,
    };
    let selected = state.select(design)?;
    Ok(TrialRecord { cohorts, tallies: state.data.tallies, excluded: state.data.excluded, stop_reason, selected })
}

/// [`simulate_trial`] on the counter-based stream `id`.
pub fn simulate_stream(design: &Design, scenario: &Scenario, cfg: &TrialConfig, id: StreamId) -> Result<TrialRecord> {
    simulate_trial(design, scenario, cfg, &mut id.rng())
}

/// Fraction of patients treated at or below the highest true MTD; `None`
/// when the scenario has no true MTD.
pub fn metric_safety(record: &TrialRecord, truth: &TrueMtd) -> Option<f64> {
    let top = truth.max_dose()?;
    let total = record.patients();
    if total == 0 {
        return None;
    }
    let at_or_below: u32 = record.tallies.iter().take(top + 1).map(|t| t.n).sum();
    Some(at_or_below as f64 / total as f64)
}

fn correct(selected: Option<usize>, truth: &TrueMtd) -> bool {
    match selected {
        Some(d) => truth.contains(d),
        None => truth.is_none(),
    }
}

/// Fraction of trials selecting a true MTD (or selecting nothing when no
/// dose qualifies).
pub fn metric_reliability(records: &[TrialRecord], truth: &TrueMtd) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records.iter().filter(|r| correct(r.selected, truth)).count();
    hits as f64 / records.len() as f64
}

/// Cheung's accuracy index
/// 1 - d Σ|p_i - p_T| n_i / (N Σ|p_i - p_T|); `None` when every dose sits
/// exactly at p_T or nobody was treated.
pub fn metric_accuracy(record: &TrialRecord, probs: &[f64], p_t: f64) -> Option<f64> {
    let counts: Vec<u32> = record.tallies.iter().map(|t| t.n).collect();
    accuracy_index(&counts, probs, p_t)
}

pub fn accuracy_index(counts: &[u32], probs: &[f64], p_t: f64) -> Option<f64> {
    let total: u32 = counts.iter().sum();
    let denom: f64 = probs.iter().map(|p| (p - p_t).abs()).sum();
    if total == 0 || denom == 0.0 || counts.len() != probs.len() {
        return None;
    }
    let num: f64 = probs.iter().zip(counts).map(|(p, &n)| (p - p_t).abs() * n as f64).sum();
    Some(1.0 - probs.len() as f64 * num / (total as f64 * denom))
}

/// Operating characteristics of one design on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSummary {
    pub design: String,
    pub scenario: String,
    pub p_t: f64,
    pub trials: usize,
    pub true_mtd: Vec<usize>,
    /// Mean per-trial safety; `None` when the scenario has no true MTD.
    pub safety: Option<f64>,
    pub reliability: f64,
    /// Monte Carlo standard error of `reliability`.
    pub reliability_se: f64,
    pub accuracy: Option<f64>,
    /// Per-dose selection fractions; `selection_none` completes them to 1.
    pub selection: Vec<f64>,
    pub selection_none: f64,
    /// Share of all treated patients at each dose.
    pub allocation: Vec<f64>,
    pub mean_patients: f64,
    pub mean_dlts: f64,
    pub safety_stop_rate: f64,
}

/// Aggregates trial records in the given order.
pub fn summarize(design: &str, scenario: &Scenario, target: &TargetSpec, records: &[TrialRecord]) -> Result<OcSummary> {
    if records.is_empty() {
        return Err(Error::Empty("no trial records to summarize".into()));
    }
    let k = scenario.n_doses();
    let truth = true_mtd(&scenario.probs, target);
    let m = records.len() as f64;

    let mut selection = vec![0.0; k];
    let mut selection_none = 0.0;
    let mut per_dose = vec![0u64; k];
    let (mut safety_sum, mut safety_count) = (0.0, 0usize);
    let (mut acc_sum, mut acc_count) = (0.0, 0usize);
    let (mut patients, mut dlts, mut stops) = (0u64, 0u64, 0usize);
    for r in records {
        if r.tallies.len() != k {
            return Err(Error::param("record does not match the scenario's dose count"));
        }
        match r.selected {
            Some(d) => selection[d] += 1.0,
            None => selection_none += 1.0,
        }
        for (c, t) in per_dose.iter_mut().zip(&r.tallies) {
            *c += t.n as u64;
        }
        if let Some(s) = metric_safety(r, &truth) {
            safety_sum += s;
            safety_count += 1;
        }
        if let Some(a) = metric_accuracy(r, &scenario.probs, target.p_t) {
            acc_sum += a;
            acc_count += 1;
        }
        patients += r.patients() as u64;
        dlts += r.dlts() as u64;
        if r.stop_reason == StopReason::SafetyStop {
            stops += 1;
        }
    }
    for s in &mut selection {
        *s /= m;
    }
    let reliability = metric_reliability(records, &truth);
    let total = patients.max(1) as f64;
    Ok(OcSummary {
        design: design.into(),
        scenario: scenario.label.clone(),
        p_t: target.p_t,
        trials: records.len(),
        true_mtd: truth.doses.clone(),
        safety: (safety_count > 0).then(|| safety_sum / safety_count as f64),
        reliability,
        reliability_se: libm::sqrt(reliability * (1.0 - reliability) / m),
        accuracy: (acc_count > 0).then(|| acc_sum / acc_count as f64),
        selection,
        selection_none: selection_none / m,
        allocation: per_dose.iter().map(|&c| c as f64 / total).collect(),
        mean_patients: patients as f64 / m,
        mean_dlts: dlts as f64 / m,
        safety_stop_rate: stops as f64 / m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{BoinVariant, DesignSpec};
    use crate::rng::seeded;

    fn target() -> TargetSpec {
        TargetSpec::symmetric(0.3, 0.05).unwrap()
    }

    fn cfg() -> TrialConfig {
        TrialConfig::new(30, 3).unwrap()
    }

    #[test]
    fn zero_toxicity_climbs_to_the_top() {
        let sc = Scenario::new("zero", 0.3, vec![0.0; 5]).unwrap();
        for spec in [DesignSpec::mtpi2(target()), DesignSpec::mtpi(target()), DesignSpec::boin(BoinVariant::Lambda, target())] {
            let d = spec.compile().unwrap();
            let r = simulate_trial(&d, &sc, &cfg(), &mut seeded(1, 0)).unwrap();
            assert!(r.cohorts.iter().all(|c| c.dlt == 0));
            let doses: Vec<usize> = r.cohorts.iter().map(|c| c.dose).collect();
            assert_eq!(&doses[..5], &[0, 1, 2, 3, 4]);
            assert_eq!(r.selected, Some(4));
            assert_eq!(r.patients(), 30);
            assert_eq!(r.stop_reason, StopReason::MaxN);
        }
    }

    #[test]
    fn certain_toxicity_stops_at_dose_one() {
        let sc = Scenario::new("all", 0.3, vec![1.0; 4]).unwrap();
        let d = DesignSpec::mtpi2(target()).compile().unwrap();
        let r = simulate_trial(&d, &sc, &cfg(), &mut seeded(1, 0)).unwrap();
        assert_eq!(r.cohorts.len(), 1);
        assert_eq!(r.stop_reason, StopReason::SafetyStop);
        assert_eq!(r.selected, None);
    }

    #[test]
    fn stream_determinism() {
        let sc = crate::scenarios::builtin_jiwang(0.3).unwrap().remove(3);
        let d = DesignSpec::mtpi2(target()).compile().unwrap();
        let id = StreamId::new(11, 3, 1, 42);
        assert_eq!(simulate_stream(&d, &sc, &cfg(), id).unwrap(), simulate_stream(&d, &sc, &cfg(), id).unwrap());
    }

    #[test]
    fn setup_errors_precede_the_first_cohort() {
        let sc = Scenario::new("s", 0.3, vec![0.1, 0.2, 0.3]).unwrap();
        let d = DesignSpec::mtpi2(target()).compile().unwrap();
        assert!(simulate_trial(&d, &sc, &TrialConfig { sample_size: 2, cohort_size: 3, start_dose: 0, seed: 0 }, &mut seeded(0, 0)).is_err());
        assert!(simulate_trial(&d, &sc, &cfg().with_start_dose(3), &mut seeded(0, 0)).is_err());
        let crm = DesignSpec::crm(crate::crm::CrmModel::default_for(4), target()).compile().unwrap();
        assert!(simulate_trial(&crm, &sc, &cfg(), &mut seeded(0, 0)).is_err());
        let tpt = DesignSpec::three_plus_three(target()).compile().unwrap();
        assert!(simulate_trial(&tpt, &sc, &TrialConfig::new(30, 2).unwrap(), &mut seeded(0, 0)).is_err());
    }

    #[test]
    fn partial_cohorts_are_not_enrolled() {
        let sc = Scenario::new("s", 0.3, vec![0.0, 0.0]).unwrap();
        let d = DesignSpec::mtpi(target()).compile().unwrap();
        let r = simulate_trial(&d, &sc, &TrialConfig::new(31, 3).unwrap(), &mut seeded(0, 0)).unwrap();
        assert_eq!(r.patients(), 30);
    }

    fn record(counts: &[u32], selected: Option<usize>) -> TrialRecord {
        TrialRecord {
            cohorts: Vec::new(),
            tallies: counts.iter().map(|&n| DoseTally::new(0, n).unwrap()).collect(),
            excluded: vec![false; counts.len()],
            stop_reason: StopReason::MaxN,
            selected,
        }
    }

    #[test]
    fn safety_metric() {
        let truth = TrueMtd { doses: vec![2], rule: crate::selection::TrueMtdRule::InInterval };
        assert_eq!(metric_safety(&record(&[9, 0, 0, 0], None), &truth), Some(1.0));
        assert_eq!(metric_safety(&record(&[3, 0, 3, 6], None), &truth), Some(0.5));
        let none = TrueMtd { doses: vec![], rule: crate::selection::TrueMtdRule::None };
        assert_eq!(metric_safety(&record(&[3, 3], None), &none), None);
    }

    #[test]
    fn reliability_metric() {
        let truth = TrueMtd { doses: vec![1], rule: crate::selection::TrueMtdRule::InInterval };
        let recs = [record(&[3, 3], Some(0)), record(&[3, 3], Some(1))];
        assert_eq!(metric_reliability(&recs, &truth), 0.5);
        let none = TrueMtd { doses: vec![], rule: crate::selection::TrueMtdRule::None };
        assert_eq!(metric_reliability(&[record(&[3], None), record(&[3], None)], &none), 1.0);
    }

    #[test]
    fn accuracy_metric() {
        let probs = [0.1, 0.3, 0.5];
        assert_eq!(accuracy_index(&[0, 12, 0], &probs, 0.3), Some(1.0));
        assert!(accuracy_index(&[5, 5, 5], &probs, 0.3).unwrap().abs() < 1e-12);
        assert_eq!(accuracy_index(&[3, 3], &[0.3, 0.3], 0.3), None);
        // The worst single-dose allocation is at the dose farthest from p_T.
        let worst = (0..3)
            .map(|i| {
                let mut c = [0u32; 3];
                c[i] = 9;
                accuracy_index(&c, &[0.05, 0.3, 0.8], 0.3).unwrap()
            })
            .enumerate()
            .fold((0, f64::INFINITY), |b, (i, a)| if a < b.1 { (i, a) } else { b });
        assert_eq!(worst.0, 2);
    }

    #[test]
    fn summary_distributions_sum_to_one() {
        let sc = crate::scenarios::builtin_jiwang(0.3).unwrap().remove(0);
        let d = DesignSpec::mtpi2(target()).compile().unwrap();
        let recs: Vec<TrialRecord> = (0..200).map(|t| simulate_stream(&d, &sc, &cfg(), StreamId::new(5, 0, 0, t)).unwrap()).collect();
        let s = summarize("mtpi2", &sc, &target(), &recs).unwrap();
        assert!((s.selection.iter().sum::<f64>() + s.selection_none - 1.0).abs() < 1e-9);
        assert!((s.allocation.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(s.accuracy.unwrap() <= 1.0);
        assert!(summarize("x", &sc, &target(), &[]).is_err());
    }
}
