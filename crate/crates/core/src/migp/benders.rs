//! Benders decomposition over two-speed partitions.
//!
//! The subproblem is the fixed-assignment design program. Moving scenario
//! `t` from its gear to the other one changes its ratio by a factor `e^u`
//! with `u` between 0 and `±log(hi/lo)`; relaxing the gear selection by
//! that margin makes the optimal value a convex function of `u`, and the
//! duals of the torque and speed links give its slope at `u = 0`. Linearized
//! at the source assignment and minimized over the allowed range, this
//! yields a lower bound on every other labeled assignment.
//!
//! The master enumerates partitions, each bounded by the better of its two
//! orientations, and picks the one with the smallest bound.

use std::io::Write;

use log::{debug, info, warn};
use serde::Serialize;

use crate::cycle::fmt_sig;
use crate::error::{Error, Result};
use crate::powertrain::{DesignResult, GearAssignment, Transmission};

use super::{MigpOptions, MigpProblem, MigpResult, MigpTrace};

/// Optimality cut `V(b) ≥ intercept + Σ_t coefficients[t][b_t − 1]` over
/// labeled two-speed assignments.
#[derive(Debug, Clone, Serialize)]
pub struct BendersCut {
    pub intercept: f64,
    /// Per non-guard scenario and gear; zero on the source gear.
    pub coefficients: Vec<[f64; 2]>,
    pub source_assignment: GearAssignment,
    pub source_objective: f64,
}

impl BendersCut {
    /// Cut from a solved labeled assignment; `regular` maps non-guard
    /// positions to scenario indices and `big_m` is `log(hi/lo)`.
    pub fn from_design(source: &GearAssignment, design: &DesignResult, regular: &[usize], big_m: f64) -> Result<Self> {
        let sol = &design.solution;
        let mut coefficients = Vec::with_capacity(regular.len());
        for (j, &t) in regular.iter().enumerate() {
            let dual = |label: String| {
                sol.dual(&label)
                    .ok_or_else(|| Error::Model(format!("subproblem has no constraint `{label}`")))
            };
            // d V / d u for a ratio change of e^u on this scenario alone
            let slope = dual(format!("torque_link[{t}]"))? - dual(format!("speed_link[{t}]"))?;
            let mut c = [0.0; 2];
            match source.gear(j) {
                // gear 2 has the smaller ratio, u ∈ [−M, 0]
                1 => c[1] = -big_m * slope.max(0.0),
                _ => c[0] = -big_m * (-slope).max(0.0),
            }
            coefficients.push(c);
        }
        Ok(BendersCut {
            intercept: design.log_objective,
            coefficients,
            source_assignment: source.clone(),
            source_objective: design.log_objective,
        })
    }

    pub fn value(&self, a: &GearAssignment) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(a.gears())
                .map(|(c, &g)| c[g - 1])
                .sum::<f64>()
    }

    /// Values at partition `mask` in canonical and flipped orientation.
    fn values_at_mask(&self, mask: u64, n: usize) -> [f64; 2] {
        let mut v = [self.intercept; 2];
        for (j, c) in self.coefficients.iter().enumerate() {
            let bit = ((mask >> (n - 1 - j)) & 1) as usize;
            v[0] += c[bit];
            v[1] += c[1 - bit];
        }
        v
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CutLogRow {
    pub iter: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Canonical partition evaluated in this iteration.
    pub assignment: String,
}

pub(crate) fn write_cut_log<W: Write>(rows: &[CutLogRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "iter,lower_bound,upper_bound,assignment")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.iter,
            fmt_sig(r.lower_bound),
            fmt_sig(r.upper_bound),
            r.assignment
        )?;
    }
    Ok(())
}

struct Incumbent {
    mask: u64,
    assignment: GearAssignment,
    design: DesignResult,
}

/// Benders decomposition; `warm_start` is evaluated first when given.
pub fn benders(
    problem: &MigpProblem,
    options: &MigpOptions,
    warm_start: Option<&GearAssignment>,
) -> Result<MigpResult> {
    options.validate()?;
    let n = problem.check()?;
    let regular = problem.regular();
    let (lo, hi) = problem.ratio_bounds;
    let big_m = (hi / lo).ln();
    let count = 1u64 << (n - 1);
    let parts = (count - 1) as usize;
    let idx = |m: u64| (m - 1) as usize;

    let mut warm = None;
    if let Some(a) = warm_start {
        if a.len() != n || a.gear_count() != 2 {
            return Err(Error::InvalidInput(format!(
                "warm start must be a two-speed assignment of {n} scenarios"
            )));
        }
        let c = a.canonical();
        let mask = c.gears().iter().fold(0u64, |m, &g| (m << 1) | (g as u64 - 1));
        if mask == 0 {
            return Err(Error::InvalidInput("warm start uses a single gear".into()));
        }
        warm = Some(mask);
    }

    // the CVT bounds every assignment from below
    let mut evaluations = 1;
    let floor = match problem.try_solve(Transmission::Cvt, &options.solver)? {
        Some(d) => d.log_objective,
        None => f64::NEG_INFINITY,
    };
    let mut bound = vec![[floor; 2]; parts];
    let mut evaluated = vec![false; parts];
    let mut incumbent: Option<Incumbent> = None;
    let mut rows = Vec::new();
    let mut cuts = 0usize;
    let mut lower = floor;

    let part_bound = |b: &[f64; 2]| b[0].min(b[1]);

    for iter in 1..=options.max_iterations {
        let upper = incumbent.as_ref().map_or(f64::INFINITY, |i| i.design.log_objective);
        let mask = match warm.take() {
            Some(m) if !evaluated[idx(m)] => m,
            _ => {
                let mut best: Option<(u64, f64)> = None;
                for m in 1..count {
                    if evaluated[idx(m)] {
                        continue;
                    }
                    let b = part_bound(&bound[idx(m)]);
                    if best.is_none_or(|(_, v)| b < v) {
                        best = Some((m, b));
                    }
                }
                match best {
                    Some((m, b)) if b < upper - options.tolerance => m,
                    _ => break,
                }
            }
        };

        let canonical = GearAssignment::from_mask(mask, n);
        let ev = problem.evaluate(&canonical, &options.solver)?;
        evaluations += 2;
        evaluated[idx(mask)] = true;
        for (a, d) in &ev.orientations {
            let Some(d) = d else {
                debug!("assignment {a} infeasible, excluded");
                continue;
            };
            let cut = BendersCut::from_design(a, d, &regular, big_m)?;
            cuts += 1;
            for m in 1..count {
                let v = cut.values_at_mask(m, n);
                let b = &mut bound[idx(m)];
                b[0] = b[0].max(v[0]);
                b[1] = b[1].max(v[1]);
            }
        }
        if let Some((a, d)) = ev.into_best() {
            let better = match &incumbent {
                None => true,
                Some(i) => {
                    d.log_objective < i.design.log_objective
                        || (d.log_objective == i.design.log_objective && mask < i.mask)
                }
            };
            if better {
                incumbent = Some(Incumbent {
                    mask,
                    assignment: a,
                    design: d,
                });
            }
        }

        let upper = incumbent.as_ref().map_or(f64::INFINITY, |i| i.design.log_objective);
        let open = (1..count)
            .filter(|&m| !evaluated[idx(m)])
            .map(|m| part_bound(&bound[idx(m)]))
            .fold(f64::INFINITY, f64::min);
        lower = lower.max(upper.min(open));
        rows.push(CutLogRow {
            iter,
            lower_bound: lower,
            upper_bound: upper,
            assignment: canonical.to_string(),
        });
        debug!("benders {iter}: lower {lower:.9} upper {upper:.9} at {canonical}");
        if lower >= upper - options.tolerance {
            break;
        }
    }

    let inc = incumbent.ok_or_else(|| Error::NotOptimal("no assignment yields a feasible design".into()))?;
    let gap = (inc.design.log_objective - lower).max(0.0);
    if gap > options.tolerance {
        warn!("benders stopped after {} iterations with gap {gap:.3e}", rows.len());
    }
    info!(
        "benders: {} iterations, {cuts} cuts, best {}",
        rows.len(),
        inc.assignment
    );
    Ok(MigpResult {
        best_assignment: inc.assignment,
        log_objective: inc.design.log_objective,
        design: inc.design,
        iterations: rows.len(),
        evaluations,
        gap: Some(gap),
        trace: MigpTrace::Cuts(rows),
    })
}
