//! Test instances from public cycles and a side-by-side run of the engines.

use std::fmt;
use std::io::Write;
use std::ops::RangeInclusive;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::cycle::{
    cluster_scenarios, fmt_sig, guard_scenarios, load_fixture, to_wheel_loads, GuardSpec, LoadScenario, VehicleParams,
};
use crate::error::{Error, Result};

use super::{benders, brute_force, heuristic, MigpOptions, MigpProblem, MigpResult};

/// Scenario counts the reference comparison covers.
pub const REFERENCE_SCENARIO_RANGE: RangeInclusive<usize> = 6..=12;

#[derive(Debug, Clone, Serialize)]
pub struct Instance {
    /// 1-based, in generation order.
    pub id: usize,
    pub cycle: String,
    pub k: usize,
    pub seed: u64,
    /// `k` clustered loads followed by the guards.
    pub scenarios: Vec<LoadScenario>,
    pub in_reference_range: bool,
}

/// One instance per (cycle, k, seed), in that nesting order.
pub fn generate_instances(
    cycles: &[&str],
    ks: &[usize],
    seeds: &[u64],
    vp: &VehicleParams,
    guards: GuardSpec,
) -> Result<Vec<Instance>> {
    let guard_loads = guard_scenarios(vp, guards)?;
    let mut out = Vec::with_capacity(cycles.len() * ks.len() * seeds.len());
    for &name in cycles {
        let loads = to_wheel_loads(&load_fixture(name)?, vp)?;
        for &k in ks {
            let in_range = REFERENCE_SCENARIO_RANGE.contains(&k);
            if !in_range {
                warn!("k = {k} lies outside the reference range {REFERENCE_SCENARIO_RANGE:?}");
            }
            for &seed in seeds {
                let mut scenarios = cluster_scenarios(&loads, k, seed, vp)?;
                scenarios.extend(guard_loads.iter().cloned());
                out.push(Instance {
                    id: out.len() + 1,
                    cycle: name.to_string(),
                    k,
                    seed,
                    scenarios,
                    in_reference_range: in_range,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Engine {
    BruteForce,
    Benders,
    /// Benders seeded with the heuristic's assignment.
    BendersHeuristic,
    Heuristic,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::BruteForce => "BF",
            Engine::Benders => "B",
            Engine::BendersHeuristic => "B+H",
            Engine::Heuristic => "H",
        })
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bf" | "bruteforce" | "brute_force" | "brute-force" => Ok(Engine::BruteForce),
            "b" | "benders" => Ok(Engine::Benders),
            "b+h" | "bh" | "benders+heuristic" | "benders_heuristic" => Ok(Engine::BendersHeuristic),
            "h" | "heuristic" => Ok(Engine::Heuristic),
            _ => Err(Error::InvalidInput(format!(
                "unknown engine `{s}`; expected bf, b, b+h or h"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    NotRun,
    Done { log_objective: f64, iterations: usize },
    Failed(String),
}

impl Cell {
    fn from_result(r: &Result<MigpResult>) -> Self {
        match r {
            Ok(m) => Cell::Done {
                log_objective: m.log_objective,
                iterations: m.iterations,
            },
            Err(e) => Cell::Failed(e.to_string()),
        }
    }

    pub fn objective(&self) -> Option<f64> {
        match self {
            Cell::Done { log_objective, .. } => Some(*log_objective),
            _ => None,
        }
    }

    pub fn iterations(&self) -> Option<usize> {
        match self {
            Cell::Done { iterations, .. } => Some(*iterations),
            _ => None,
        }
    }

    fn objective_text(&self) -> String {
        match self {
            Cell::NotRun => String::new(),
            Cell::Done { log_objective, .. } => fmt_sig(*log_objective),
            Cell::Failed(_) => "ERR".into(),
        }
    }

    fn iterations_text(&self) -> String {
        match self {
            Cell::NotRun => String::new(),
            Cell::Done { iterations, .. } => iterations.to_string(),
            Cell::Failed(_) => "ERR".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub id: usize,
    pub cycle: String,
    pub k: usize,
    pub seed: u64,
    pub brute_force: Cell,
    pub benders: Cell,
    pub benders_heuristic: Cell,
    pub heuristic: Cell,
}

fn run_instance(inst: &Instance, engines: &[Engine], base: &MigpProblem, options: &MigpOptions) -> ComparisonRow {
    let problem = MigpProblem {
        scenarios: inst.scenarios.clone(),
        ..base.clone()
    };
    let wants = |e: Engine| engines.contains(&e);
    let mut row = ComparisonRow {
        id: inst.id,
        cycle: inst.cycle.clone(),
        k: inst.k,
        seed: inst.seed,
        brute_force: Cell::NotRun,
        benders: Cell::NotRun,
        benders_heuristic: Cell::NotRun,
        heuristic: Cell::NotRun,
    };
    if wants(Engine::BruteForce) {
        row.brute_force = Cell::from_result(&brute_force(&problem, options));
    }
    if wants(Engine::Benders) {
        row.benders = Cell::from_result(&benders(&problem, options, None));
    }
    if wants(Engine::Heuristic) || wants(Engine::BendersHeuristic) {
        let h = heuristic(&problem, options);
        if wants(Engine::Heuristic) {
            row.heuristic = Cell::from_result(&h);
        }
        if wants(Engine::BendersHeuristic) {
            row.benders_heuristic = match &h {
                Ok(h) => Cell::from_result(&benders(&problem, options, Some(&h.best_assignment))),
                Err(e) => Cell::Failed(format!("heuristic failed: {e}")),
            };
        }
    }
    info!(
        "instance {} ({} k={} seed={}) done",
        inst.id, inst.cycle, inst.k, inst.seed
    );
    row
}

/// Run `engines` on every instance with the vehicle, motor and ratio bounds
/// of `base`; failures are recorded per cell.
pub fn compare(
    instances: &[Instance],
    engines: &[Engine],
    base: &MigpProblem,
    options: &MigpOptions,
) -> Result<Vec<ComparisonRow>> {
    if engines.is_empty() {
        return Err(Error::InvalidInput("no engines selected".into()));
    }
    options.validate()?;
    Ok(instances
        .par_iter()
        .map(|inst| run_instance(inst, engines, base, options))
        .collect())
}

const HEADER: [&str; 9] = [
    "ID", "BF/P", "B/P", "B+H/P", "H/P", "B/#it", "B+H/#it", "BF/#it", "CYCLE",
];

fn fields(r: &ComparisonRow) -> [String; 9] {
    [
        r.id.to_string(),
        r.brute_force.objective_text(),
        r.benders.objective_text(),
        r.benders_heuristic.objective_text(),
        r.heuristic.objective_text(),
        r.benders.iterations_text(),
        r.benders_heuristic.iterations_text(),
        r.brute_force.iterations_text(),
        r.cycle.clone(),
    ]
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], w: W) -> Result<()> {
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(HEADER).map_err(ser)?;
    for r in rows {
        wr.write_record(fields(r)).map_err(ser)?;
    }
    wr.flush().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn write_comparison_markdown<W: Write>(rows: &[ComparisonRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "| {} |", HEADER.join(" | "))?;
    writeln!(w, "|{}", "---|".repeat(HEADER.len()))?;
    for r in rows {
        writeln!(w, "| {} |", fields(r).join(" | "))?;
    }
    Ok(())
}
