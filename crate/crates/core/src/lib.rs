//! Interval-based dose-finding for phase I trials.
//!
//! The crate is `no_std` (it needs `alloc`). It carries the per-cohort
//! decision rules of the TPI family (TPI, mTPI, mTPI-2), the boundary
//! designs (CCD, BOIN), the 3+3 algorithm and a one-parameter CRM, plus
//! MTD selection, scenario generators, single-trial simulation with the
//! usual operating-characteristic metrics, and decision-table analysis.
//!
//! IO, parallel batch running, the CLI and the HTTP service live in the
//! `dosefind` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod crm;
pub mod design;
pub mod error;
pub mod rng;
pub mod scenarios;
pub mod selection;
pub mod simulator;
pub mod special;
pub mod tables;
pub mod trial;

pub use design::{
    BetaPosterior, BetaPrior, BoinBoundaries, BoinVariant, Decision, Design, DesignSpec, DoseTally,
    Family, Interval, SafetyRule, TargetSpec,
};
pub use error::{Error, Result};
pub use scenarios::Scenario;
pub use simulator::{OcSummary, TrialConfig, TrialRecord};
pub use tables::{DecisionTable, EmpiricalTable};
