//! Discrete gear assignment for a two-speed gearbox.
//!
//! A two-speed assignment splits the non-guard scenarios into two blocks.
//! Which block gets the larger ratio is decided inside an evaluation: both
//! orientations are solved and the better one is kept, so every canonical
//! assignment (scenario 0 on gear 1) stands for one set partition.

mod benders;
mod compare;
mod heuristic;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cycle::{LoadScenario, VehicleParams};
use crate::error::{Error, Result};
use crate::powertrain::{
    build_design_model, solve_design, DesignResult, GearAssignment, MotorParams, Topology, Transmission,
    DEFAULT_RATIO_BOUNDS,
};
use crate::solve::SolverOptions;

pub use benders::{benders, BendersCut, CutLogRow};
pub use compare::{
    compare, generate_instances, write_comparison_csv, write_comparison_markdown, Cell, ComparisonRow, Engine,
    Instance, REFERENCE_SCENARIO_RANGE,
};
pub use heuristic::{heuristic, HeuristicStep};

/// Default largest scenario count brute force accepts.
pub const DEFAULT_BRUTE_FORCE_CAP: usize = 16;

/// Number of ways to split `n` items into `k` non-empty blocks; 0 when
/// `k > n`.
pub fn stirling2(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    // row of S(i, 0..=k), built with S(i,j) = j·S(i−1,j) + S(i−1,j−1)
    let mut row = vec![0u128; k as usize + 1];
    row[0] = 1;
    for i in 1..=n as usize {
        for j in (1..=k.min(i as u32) as usize).rev() {
            row[j] = j as u128 * row[j] + row[j - 1];
        }
        row[0] = 0;
    }
    row[k as usize]
}

/// Canonical two-speed assignments of `n` scenarios in lexicographic order:
/// scenario 0 is on gear 1 and at least one scenario is on gear 2.
pub fn enumerate_assignments(n: usize, gears: usize) -> Result<impl Iterator<Item = GearAssignment>> {
    if gears != 2 {
        return Err(Error::Unsupported(format!(
            "assignment enumeration only handles two gears, got {gears}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("need at least one scenario".into()));
    }
    if n > 63 {
        return Err(Error::Unsupported(format!("{n} scenarios are too many to enumerate")));
    }
    let count = 1u64 << (n - 1);
    Ok((1..count).map(move |m| GearAssignment::from_mask(m, n)))
}

/// Scenario set and fixed parameters shared by all engines.
#[derive(Debug, Clone)]
pub struct MigpProblem {
    pub scenarios: Vec<LoadScenario>,
    pub vehicle: VehicleParams,
    pub motor: MotorParams,
    pub ratio_bounds: (f64, f64),
}

impl MigpProblem {
    pub fn new(scenarios: Vec<LoadScenario>, vehicle: VehicleParams, motor: MotorParams) -> Self {
        MigpProblem {
            scenarios,
            vehicle,
            motor,
            ratio_bounds: DEFAULT_RATIO_BOUNDS,
        }
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.ratio_bounds = (lo, hi);
        self
    }

    /// Indices of the non-guard scenarios.
    pub fn regular(&self) -> Vec<usize> {
        (0..self.scenarios.len())
            .filter(|&t| !self.scenarios[t].is_guard)
            .collect()
    }

    fn check(&self) -> Result<usize> {
        let n = self.regular().len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "a two-speed assignment needs at least 2 non-guard scenarios, got {n}"
            )));
        }
        if n > 63 {
            return Err(Error::Unsupported(format!("{n} scenarios are too many to enumerate")));
        }
        Ok(n)
    }

    fn topology(&self, transmission: Transmission) -> Topology {
        Topology::new(transmission).with_bounds(self.ratio_bounds.0, self.ratio_bounds.1)
    }

    /// Solve a topology; `None` when the program is infeasible or the solver
    /// stops short of optimality.
    pub(crate) fn try_solve(&self, transmission: Transmission, solver: &SolverOptions) -> Result<Option<DesignResult>> {
        let dm = build_design_model(
            &self.scenarios,
            &self.vehicle,
            &self.motor,
            &self.topology(transmission),
        )?;
        match solve_design(&dm, solver) {
            Ok(d) => Ok(Some(d)),
            Err(Error::NotOptimal(msg)) => {
                debug!("subproblem not solved: {msg}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// Solve one labeled two-speed assignment (gear 1 carries the larger ratio).
    pub fn solve_assignment(&self, a: &GearAssignment, solver: &SolverOptions) -> Result<Option<DesignResult>> {
        self.try_solve(Transmission::Fixed(a.clone()), solver)
    }

    /// Both orientations of a partition, canonical first.
    pub(crate) fn evaluate(&self, canonical: &GearAssignment, solver: &SolverOptions) -> Result<Evaluation> {
        let flipped = canonical.complement();
        let a = self.solve_assignment(canonical, solver)?;
        let b = self.solve_assignment(&flipped, solver)?;
        Ok(Evaluation {
            orientations: [(canonical.clone(), a), (flipped, b)],
        })
    }
}

pub(crate) struct Evaluation {
    pub orientations: [(GearAssignment, Option<DesignResult>); 2],
}

impl Evaluation {
    /// Better orientation; the canonical one wins ties.
    pub fn best(&self) -> Option<(&GearAssignment, &DesignResult)> {
        let mut best: Option<(&GearAssignment, &DesignResult)> = None;
        for (a, d) in &self.orientations {
            if let Some(d) = d {
                if best.is_none_or(|(_, b)| d.log_objective < b.log_objective) {
                    best = Some((a, d));
                }
            }
        }
        best
    }

    pub fn into_best(self) -> Option<(GearAssignment, DesignResult)> {
        let [(a, da), (b, db)] = self.orientations;
        match (da, db) {
            (Some(x), Some(y)) if y.log_objective < x.log_objective => Some((b, y)),
            (Some(x), _) => Some((a, x)),
            (None, Some(y)) => Some((b, y)),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MigpOptions {
    /// Options for every design program the engines solve.
    #[serde(skip)]
    pub solver: SolverOptions,
    /// Largest non-guard scenario count brute force accepts.
    pub brute_force_cap: usize,
    /// Benders stops once the incumbent is within this of the lower bound
    /// (log space).
    pub tolerance: f64,
    /// Cap on Benders subproblem evaluations.
    pub max_iterations: usize,
    /// Initial closeness threshold of the heuristic, in log-ratio units.
    pub threshold: f64,
}

impl Default for MigpOptions {
    fn default() -> Self {
        MigpOptions {
            solver: SolverOptions::default(),
            brute_force_cap: DEFAULT_BRUTE_FORCE_CAP,
            tolerance: 1e-6,
            max_iterations: 100_000,
            threshold: 0.15,
        }
    }
}

impl MigpOptions {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tolerance must be ≥ 0, got {}",
                self.tolerance
            )));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Search trace of an engine.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "rows")]
pub enum MigpTrace {
    None,
    Cuts(Vec<CutLogRow>),
    Heuristic(Vec<HeuristicStep>),
}

#[derive(Debug, Clone, Serialize)]
pub struct MigpResult {
    /// As solved: gear 1 carries the larger ratio.
    pub best_assignment: GearAssignment,
    pub design: DesignResult,
    pub log_objective: f64,
    /// Brute force and Benders: partitions evaluated. Heuristic: assignment
    /// rounds.
    pub iterations: usize,
    /// Design programs solved.
    pub evaluations: usize,
    /// Upper minus lower bound at exit; 0 for brute force, `None` for the
    /// heuristic.
    pub gap: Option<f64>,
    pub trace: MigpTrace,
}

impl MigpResult {
    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        match &self.trace {
            MigpTrace::Cuts(rows) => benders::write_cut_log(rows, w),
            MigpTrace::Heuristic(rows) => heuristic::write_trace(rows, w),
            MigpTrace::None => Ok(()),
        }
    }
}

/// Evaluate every canonical assignment and keep the best.
pub fn brute_force(problem: &MigpProblem, options: &MigpOptions) -> Result<MigpResult> {
    options.validate()?;
    let n = problem.check()?;
    if n > options.brute_force_cap {
        return Err(Error::BruteForceCap {
            scenarios: n,
            cap: options.brute_force_cap,
        });
    }
    let count = 1u64 << (n - 1);
    type Best = Option<(u64, GearAssignment, DesignResult)>;
    // keep the smaller objective, then the smaller mask; order-independent
    let pick = |x: Best, y: Best| -> Best {
        match (x, y) {
            (Some(a), Some(b)) => {
                let b_wins =
                    b.2.log_objective < a.2.log_objective || (b.2.log_objective == a.2.log_objective && b.0 < a.0);
                Some(if b_wins { b } else { a })
            }
            (a, None) => a,
            (None, b) => b,
        }
    };
    let best = (1..count)
        .into_par_iter()
        .map(|m| -> Result<Best> {
            let a = GearAssignment::from_mask(m, n);
            let ev = problem.evaluate(&a, &options.solver)?;
            if ev.best().is_none() {
                warn!("assignment {a} infeasible in both orientations");
            }
            Ok(ev.into_best().map(|(a, d)| (m, a, d)))
        })
        .try_reduce(|| None, |x, y| Ok(pick(x, y)))?;
    let (_, assignment, design) =
        best.ok_or_else(|| Error::NotOptimal("no assignment yields a feasible design".into()))?;
    Ok(MigpResult {
        best_assignment: assignment,
        log_objective: design.log_objective,
        design,
        iterations: (count - 1) as usize,
        evaluations: 2 * (count - 1) as usize,
        gap: Some(0.0),
        trace: MigpTrace::None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stirling_values() {
        assert_eq!(stirling2(2, 2), 1);
        assert_eq!(stirling2(4, 2), 7);
        assert_eq!(stirling2(12, 2), 2047);
        assert_eq!(stirling2(3, 5), 0);
        assert_eq!(stirling2(0, 0), 1);
        assert_eq!(stirling2(5, 0), 0);
        assert_eq!(stirling2(5, 3), 25);
        assert_eq!(stirling2(6, 6), 1);
    }

    #[test]
    fn stirling_matches_alternating_sum() {
        // S(n,k) = 1/k! Σ_j (−1)^j C(k,j) (k−j)^n
        for n in 0..=20u32 {
            for k in 0..=6u32.min(n) {
                let mut sum: i128 = 0;
                let mut binom: i128 = 1;
                for j in 0..=k as i128 {
                    let term = binom * (k as i128 - j).pow(n);
                    sum += if j % 2 == 0 { term } else { -term };
                    binom = binom * (k as i128 - j) / (j + 1);
                }
                let fact: i128 = (1..=k as i128).product();
                assert_eq!(stirling2(n, k) as i128, sum / fact, "S({n},{k})");
            }
        }
    }

    #[test]
    fn enumeration_of_three() {
        let v: Vec<String> = enumerate_assignments(3, 2).unwrap().map(|a| a.to_string()).collect();
        assert_eq!(v, ["112", "121", "122"]);
        assert_eq!(enumerate_assignments(1, 2).unwrap().count(), 0);
        assert_eq!(enumerate_assignments(6, 2).unwrap().count(), 31);
        assert!(matches!(enumerate_assignments(4, 3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn enumeration_is_sorted_and_canonical() {
        let v: Vec<GearAssignment> = enumerate_assignments(7, 2).unwrap().collect();
        assert_eq!(v.len() as u128, stirling2(7, 2));
        assert!(v.windows(2).all(|w| w[0].gears() < w[1].gears()));
        assert!(v.iter().all(|a| a.gear(0) == 1 && a.counts()[1] > 0));
    }
}
