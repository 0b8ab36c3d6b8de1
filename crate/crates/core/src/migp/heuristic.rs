//! Iterative assignment from relaxed ratios.
//!
//! Starting from the CVT, the highest-torque load is pinned to gear 1 and
//! the fastest load to gear 2. Each round re-solves with the assigned loads
//! tied to their gear ratio and the rest free, then assigns free loads whose
//! own ratio lies within a shrinking log distance of a gear ratio; at least
//! the closest one is assigned every round.

use std::io::Write;

use log::{debug, warn};
use serde::Serialize;

use crate::cycle::fmt_sig;
use crate::error::{Error, Result};
use crate::powertrain::{DesignResult, GearAssignment, Transmission};

use super::{MigpOptions, MigpProblem, MigpResult, MigpTrace};

#[derive(Debug, Clone, Serialize)]
pub struct HeuristicStep {
    /// 0 for the CVT relaxation.
    pub iteration: usize,
    /// Closeness threshold used for this round's batch.
    pub threshold: Option<f64>,
    /// Non-guard positions assigned in this round.
    pub assigned: Vec<usize>,
    /// Gear per non-guard scenario after this round.
    pub gears: Vec<Option<usize>>,
    /// Empty for the CVT row.
    pub gear_ratios: Vec<f64>,
    /// Ratio each non-guard scenario runs at.
    pub scenario_ratios: Vec<f64>,
    pub log_objective: f64,
    /// This round replaced a batch that made the program infeasible.
    pub backtracked: bool,
}

pub(crate) fn write_trace<W: Write>(rows: &[HeuristicStep], mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration,threshold,log_objective,i_1,i_2,assigned,state")?;
    for r in rows {
        let state: String = r
            .gears
            .iter()
            .map(|g| g.map_or('0', |g| char::from_digit(g as u32, 10).unwrap_or('?')))
            .collect();
        let ratio = |g: usize| r.gear_ratios.get(g).map(|&x| fmt_sig(x)).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.iteration,
            r.threshold.map(fmt_sig).unwrap_or_default(),
            fmt_sig(r.log_objective),
            ratio(0),
            ratio(1),
            r.gears.iter().flatten().count(),
            state
        )?;
    }
    Ok(())
}

fn first_max(values: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in values {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((j, v));
        }
    }
    best.map(|(j, _)| j)
}

/// Nearest gear and log distance of each free scenario.
fn distances(gears: &[Option<usize>], design: &DesignResult, regular: &[usize]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (j, g) in gears.iter().enumerate() {
        if g.is_some() {
            continue;
        }
        let r = design.points[regular[j]].ratio.ln();
        let (mut gear, mut dist) = (1, f64::INFINITY);
        for (k, i) in design.ratios.iter().enumerate() {
            let d = (r - i.ln()).abs();
            if d < dist {
                (gear, dist) = (k + 1, d);
            }
        }
        out.push((j, gear, dist));
    }
    out
}

pub fn heuristic(problem: &MigpProblem, options: &MigpOptions) -> Result<MigpResult> {
    options.validate()?;
    let n = problem.check()?;
    let regular = problem.regular();
    let scen = &problem.scenarios;
    let mut evaluations = 0;
    let mut trace = Vec::new();

    let solve = |gears: &[Option<usize>], evaluations: &mut usize| -> Result<Option<DesignResult>> {
        *evaluations += 1;
        let transmission = if gears.iter().all(Option::is_some) {
            let fixed: Vec<usize> = gears.iter().map(|g| g.unwrap_or(1)).collect();
            Transmission::Fixed(GearAssignment::new(fixed, 2)?)
        } else {
            Transmission::Linked {
                gears: gears.to_vec(),
                gear_count: 2,
            }
        };
        problem.try_solve(transmission, &options.solver)
    };
    let ratios_of = |d: &DesignResult| regular.iter().map(|&t| d.points[t].ratio).collect::<Vec<f64>>();

    let cvt = solve(&vec![None; n], &mut evaluations)?
        .ok_or_else(|| Error::NotOptimal("CVT relaxation has no optimal design".into()))?;
    trace.push(HeuristicStep {
        iteration: 0,
        threshold: None,
        assigned: Vec::new(),
        gears: vec![None; n],
        gear_ratios: Vec::new(),
        scenario_ratios: ratios_of(&cvt),
        log_objective: cvt.log_objective,
        backtracked: false,
    });

    let mut gears: Vec<Option<usize>> = vec![None; n];
    let launch = first_max((0..n).map(|j| (j, scen[regular[j]].wheel_torque))).unwrap_or(0);
    gears[launch] = Some(1);
    let fast = first_max(
        (0..n)
            .filter(|&j| j != launch)
            .map(|j| (j, scen[regular[j]].wheel_speed)),
    )
    .unwrap_or(0);
    gears[fast] = Some(2);
    let mut batch = vec![launch, fast];
    let mut threshold = None;
    let mut backtracked = false;
    let mut iteration = 1;

    let design = loop {
        let mut solved = solve(&gears, &mut evaluations)?;
        let mut replaced = false;
        if solved.is_none() {
            if backtracked || iteration == 1 {
                return Err(Error::NotOptimal(format!(
                    "heuristic round {iteration} is infeasible after assigning {batch:?}"
                )));
            }
            warn!("heuristic round {iteration} infeasible, backtracking");
            let keep = batch[0];
            let gear = gears[keep];
            for &j in &batch {
                gears[j] = None;
            }
            // a lone infeasible assignment is retried on the other gear
            gears[keep] = if batch.len() == 1 { gear.map(|g| 3 - g) } else { gear };
            batch = vec![keep];
            backtracked = true;
            replaced = true;
            solved = solve(&gears, &mut evaluations)?;
        }
        let Some(d) = solved else {
            return Err(Error::NotOptimal(format!(
                "heuristic round {iteration} is infeasible after backtracking"
            )));
        };
        debug!(
            "heuristic round {iteration}: assigned {batch:?}, log objective {:.9}",
            d.log_objective
        );
        trace.push(HeuristicStep {
            iteration,
            threshold,
            assigned: batch.clone(),
            gears: gears.clone(),
            gear_ratios: d.ratios.clone(),
            scenario_ratios: ratios_of(&d),
            log_objective: d.log_objective,
            backtracked: replaced,
        });
        if gears.iter().all(Option::is_some) {
            break d;
        }

        let tau = options.threshold / f64::powi(2.0, iteration as i32 - 1);
        let dist = distances(&gears, &d, &regular);
        let mut order = dist.clone();
        order.sort_by(|a, b| a.2.total_cmp(&b.2));
        // closest first, so a backtrack keeps the closest
        batch = order.iter().filter(|(_, _, x)| *x <= tau).map(|&(j, _, _)| j).collect();
        if batch.is_empty() {
            batch.push(order[0].0);
        }
        for &(j, g, _) in &dist {
            if batch.contains(&j) {
                gears[j] = Some(g);
            }
        }
        threshold = Some(tau);
        iteration += 1;
    };

    let assignment = GearAssignment::new(gears.iter().map(|g| g.unwrap_or(1)).collect(), 2)?;
    Ok(MigpResult {
        best_assignment: assignment,
        log_objective: design.log_objective,
        design,
        iterations: iteration,
        evaluations,
        gap: None,
        trace: MigpTrace::Heuristic(trace),
    })
}
