//! Decision tables, CRM empirical decision frequencies and table
//! differences.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::design::{Decision, Design, DesignSpec, DoseTally, TargetSpec};
use crate::error::{Error, Result};
use crate::simulator::TrialRecord;

/// Anything that assigns a mean decision score to (x, n) cells.
pub trait ScoreTable {
    fn n_max(&self) -> u32;
    /// `None` for cells without information (unvisited empirical cells).
    fn score(&self, x: u32, n: u32) -> Option<f64>;
}

/// The fixed decision R(x, n) for 0 ≤ x ≤ n ≤ n_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTable {
    pub design: DesignSpec,
    pub n_max: u32,
    /// `cells[n][x]`.
    pub cells: Vec<Vec<Decision>>,
}

impl DecisionTable {
    pub fn get(&self, x: u32, n: u32) -> Option<Decision> {
        self.cells.get(n as usize)?.get(x as usize).copied()
    }

    /// Whether every column reads E..S..D/DU from top to bottom.
    pub fn is_column_monotone(&self) -> bool {
        self.cells.iter().all(|col| col.windows(2).all(|w| w[0] <= w[1]))
    }
}

impl ScoreTable for DecisionTable {
    fn n_max(&self) -> u32 {
        self.n_max
    }

    fn score(&self, x: u32, n: u32) -> Option<f64> {
        self.get(x, n).map(|d| d.score() as f64)
    }
}

/// Decision table of a fixed-rule design, safety overlay included.
pub fn decision_table(design: &Design, n_max: u32) -> Result<DecisionTable> {
    if !design.is_fixed_rule() {
        return Err(Error::config(alloc::format!(
            "{} has no fixed decision table; tabulate simulated decisions instead",
            design.name()
        )));
    }
    if n_max == 0 {
        return Err(Error::param("n_max must be at least 1"));
    }
    let mut cells = Vec::with_capacity(n_max as usize + 1);
    for n in 0..=n_max {
        let col = (0..=n).map(|x| design.decide(DoseTally { x, n })).collect::<Result<Vec<_>>>()?;
        cells.push(col);
    }
    Ok(DecisionTable { design: design.spec().clone(), n_max, cells })
}

/// Counts of E, S and D decisions per (x, n) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTable {
    pub n_max: u32,
    /// `counts[n][x] = [E, S, D]`.
    pub counts: Vec<Vec<[u64; 3]>>,
}

impl EmpiricalTable {
    pub fn new(n_max: u32) -> Self {
        EmpiricalTable { n_max, counts: (0..=n_max).map(|n| vec![[0; 3]; n as usize + 1]).collect() }
    }

    pub fn record(&mut self, tally: DoseTally, decision: Decision) {
        if tally.n > self.n_max || tally.x > tally.n {
            return;
        }
        let slot = match decision {
            Decision::Escalate => 0,
            Decision::Stay => 1,
            _ => 2,
        };
        self.counts[tally.n as usize][tally.x as usize][slot] += 1;
    }

    pub fn visits(&self, x: u32, n: u32) -> u64 {
        self.counts.get(n as usize).and_then(|c| c.get(x as usize)).map_or(0, |c| c.iter().sum())
    }

    /// (q(E), q(S), q(D)); `None` for unvisited cells.
    pub fn proportions(&self, x: u32, n: u32) -> Option<[f64; 3]> {
        let c = self.counts.get(n as usize)?.get(x as usize)?;
        let total: u64 = c.iter().sum();
        (total > 0).then(|| c.map(|v| v as f64 / total as f64))
    }

    pub fn merge(&mut self, other: &EmpiricalTable) -> Result<()> {
        if other.n_max != self.n_max {
            return Err(Error::param("empirical tables differ in n_max"));
        }
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            for (u, v) in a.iter_mut().zip(b) {
                *u += v;
            }
        }
        Ok(())
    }
}

impl ScoreTable for EmpiricalTable {
    fn n_max(&self) -> u32 {
        self.n_max
    }

    fn score(&self, x: u32, n: u32) -> Option<f64> {
        self.proportions(x, n).map(mean_decision_score)
    }
}

/// Frequencies of the decision taken after each cohort, keyed by the
/// cumulative tally at the dose that cohort was treated at.
pub fn crm_empirical_table(records: &[TrialRecord], n_max: u32) -> Result<EmpiricalTable> {
    if records.is_empty() {
        return Err(Error::Empty("no trial records to tabulate".into()));
    }
    let mut table = EmpiricalTable::new(n_max);
    for c in records.iter().flat_map(|r| &r.cohorts) {
        table.record(c.tally, c.decision);
    }
    Ok(table)
}

/// 1·q(E) + 2·q(S) + 3·q(D).
pub fn mean_decision_score(q: [f64; 3]) -> f64 {
    q[0] + 2.0 * q[1] + 3.0 * q[2]
}

/// Σ_{n=1..N} Σ_{x=1..n} (score₁ − score₂), skipping cells either table
/// has no information for. Positive means the first design de-escalates
/// more.
pub fn table_diff(t1: &dyn ScoreTable, t2: &dyn ScoreTable, n: u32) -> Result<f64> {
    if n == 0 || n > t1.n_max() || n > t2.n_max() {
        return Err(Error::param(alloc::format!(
            "cannot compare tables with n_max {} and {} up to N = {n}",
            t1.n_max(),
            t2.n_max()
        )));
    }
    let mut sum = 0.0;
    for m in 1..=n {
        for x in 1..=m {
            if let (Some(a), Some(b)) = (t1.score(x, m), t2.score(x, m)) {
                sum += a - b;
            }
        }
    }
    Ok(sum)
}

/// One side of a difference grid: a design re-targeted on every grid
/// cell, or a table that does not depend on the margins.
#[derive(Debug, Clone)]
pub enum GridSide<'a> {
    Design(&'a DesignSpec),
    Table(&'a dyn ScoreTable),
}

impl core::fmt::Debug for dyn ScoreTable + '_ {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "ScoreTable(n_max = {})", self.n_max())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffGrid {
    pub p_t: f64,
    pub n: u32,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    /// `values[i][j]` at (eps1[i], eps2[j]).
    pub values: Vec<Vec<f64>>,
}

/// `table_diff` over every (ε₁, ε₂) pair.
pub fn diff_grid(first: &GridSide<'_>, second: &GridSide<'_>, p_t: f64, eps1: &[f64], eps2: &[f64], n: u32) -> Result<DiffGrid> {
    if eps1.is_empty() || eps2.is_empty() {
        return Err(Error::param("empty margin grid"));
    }
    let mut values = Vec::with_capacity(eps1.len());
    for &e1 in eps1 {
        let mut row = Vec::with_capacity(eps2.len());
        for &e2 in eps2 {
            row.push(diff_cell(first, second, TargetSpec::new(p_t, e1, e2)?, n)?);
        }
        values.push(row);
    }
    Ok(DiffGrid { p_t, n, eps1: eps1.to_vec(), eps2: eps2.to_vec(), values })
}

/// A single grid cell.
pub fn diff_cell(first: &GridSide<'_>, second: &GridSide<'_>, target: TargetSpec, n: u32) -> Result<f64> {
    let a = side_table(first, target, n)?;
    let b = side_table(second, target, n)?;
    table_diff(a.as_ref(), b.as_ref(), n)
}

enum Owned<'a> {
    Fixed(DecisionTable),
    Borrowed(&'a dyn ScoreTable),
}

impl Owned<'_> {
    fn as_ref(&self) -> &dyn ScoreTable {
        match self {
            Owned::Fixed(t) => t,
            Owned::Borrowed(t) => *t,
        }
    }
}

fn side_table<'a>(side: &GridSide<'a>, target: TargetSpec, n: u32) -> Result<Owned<'a>> {
    match side {
        GridSide::Design(spec) => {
            let mut spec = (*spec).clone();
            spec.target = target;
            Ok(Owned::Fixed(decision_table(&spec.compile()?, n)?))
        }
        GridSide::Table(t) => Ok(Owned::Borrowed(*t)),
    }
}

/// Default margin axis: 0.005, 0.010, ..., 0.050.
pub fn default_margins() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.005).collect()
}
