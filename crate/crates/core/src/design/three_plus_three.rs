//! The 3+3 algorithm.

use serde::{Deserialize, Serialize};

use super::types::DoseTally;
use crate::error::{Error, Result};

/// Outcome of the 3+3 rules after a cohort of three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThreePlusThreeStep {
    Escalate,
    /// Treat three more patients at the current dose.
    Stay,
    /// Exclude the current dose (and above) and treat more at the dose below.
    DeEscalateAndExclude,
    /// Exclude the current dose (and above) and stop: the given dose is the MTD.
    ExcludeAndDeclare(usize),
    /// Stop: the given dose is the MTD.
    Declare(usize),
    /// Stop without an MTD (the lowest dose is too toxic).
    StopNoMtd,
}

/// Applies the 3+3 rules to the tally at `current`.
///
/// 0/3 escalates (or expands to six when the next dose is unavailable),
/// 1/3 expands, at most 1/6 escalates or declares the current dose, and
/// 2 or more DLTs exclude the dose and fall back to the dose below, which
/// is declared if it already has six patients.
pub fn three_plus_three_decide(tallies: &[DoseTally], excluded: &[bool], current: usize) -> Result<ThreePlusThreeStep> {
    if current >= tallies.len() || excluded.len() != tallies.len() {
        return Err(Error::param("3+3 state out of range"));
    }
    let tally = tallies[current];
    let next_open = current + 1 < tallies.len() && !excluded[current + 1] && tallies[current + 1].n == 0;
    let fall_back = || {
        if current == 0 {
            ThreePlusThreeStep::StopNoMtd
        } else if tallies[current - 1].n >= 6 {
            ThreePlusThreeStep::ExcludeAndDeclare(current - 1)
        } else {
            ThreePlusThreeStep::DeEscalateAndExclude
        }
    };
    Ok(match (tally.n, tally.x) {
        (3, 0) if next_open => ThreePlusThreeStep::Escalate,
        (3, 0) | (3, 1) => ThreePlusThreeStep::Stay,
        (3, _) => fall_back(),
        (6, x) if x <= 1 && next_open => ThreePlusThreeStep::Escalate,
        (6, x) if x <= 1 => ThreePlusThreeStep::Declare(current),
        (6, _) => fall_back(),
        (n, _) => {
            return Err(Error::config(alloc::format!(
                "3+3 needs cohorts of three; found {n} patients at the current dose"
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t(x: u32, n: u32) -> DoseTally {
        DoseTally::new(x, n).unwrap()
    }

    #[test]
    fn canonical_rules() {
        let ex = vec![false; 3];
        assert_eq!(three_plus_three_decide(&[t(0, 3), t(0, 0), t(0, 0)], &ex, 0).unwrap(), ThreePlusThreeStep::Escalate);
        assert_eq!(three_plus_three_decide(&[t(0, 3), t(1, 3), t(0, 0)], &ex, 1).unwrap(), ThreePlusThreeStep::Stay);
        assert_eq!(
            three_plus_three_decide(&[t(0, 3), t(2, 3), t(0, 0)], &ex, 1).unwrap(),
            ThreePlusThreeStep::DeEscalateAndExclude
        );
        assert_eq!(three_plus_three_decide(&[t(0, 3), t(0, 3), t(1, 6)], &ex, 2).unwrap(), ThreePlusThreeStep::Declare(2));
        assert_eq!(three_plus_three_decide(&[t(2, 3), t(0, 0), t(0, 0)], &ex, 0).unwrap(), ThreePlusThreeStep::StopNoMtd);
        assert_eq!(
            three_plus_three_decide(&[t(1, 6), t(2, 6), t(0, 0)], &ex, 1).unwrap(),
            ThreePlusThreeStep::ExcludeAndDeclare(0)
        );
        // Top dose with 0/3 expands before declaring.
        assert_eq!(three_plus_three_decide(&[t(0, 3), t(0, 3), t(0, 3)], &ex, 2).unwrap(), ThreePlusThreeStep::Stay);
    }

    #[test]
    fn back_at_lower_dose_declares_when_upper_is_excluded() {
        let ex = vec![false, true, true];
        assert_eq!(three_plus_three_decide(&[t(0, 6), t(2, 3), t(0, 0)], &ex, 0).unwrap(), ThreePlusThreeStep::Declare(0));
    }

    #[test]
    fn wrong_cohort_size_is_a_config_error() {
        let r = three_plus_three_decide(&[t(0, 2), t(0, 0)], &[false, false], 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
