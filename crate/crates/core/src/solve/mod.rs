//! Interior-point solver for log-transformed geometric programs.
//!
//! Equalities are eliminated up front, the remaining inequality program is
//! solved by a primal-dual interior-point method (with a slack phase I when
//! the start is infeasible), and all multipliers are mapped back to the original
//! constraints.

mod dense;
mod elimination;
mod newton;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::model::GpModel;
use crate::gp::transform::{log_transform, ConvexProgram};
use elimination::{Origin, Reduction};
use newton::{initial_point, phase_one_program, Barrier, Outcome};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Bound on the ∞-norm of the dual residual at termination.
    pub feasibility_tol: f64,
    /// Bound on the surrogate duality gap at termination, in log units.
    pub duality_gap_tol: f64,
    /// Initial multipliers are this weight over the constraint slacks.
    pub initial_barrier_weight: f64,
    /// Fraction of the current duality gap targeted by each Newton step, in (0, 1).
    pub barrier_reduction: f64,
    /// Sufficient-decrease fraction of the residual line search.
    pub armijo: f64,
    /// Step shrink factor of the backtracking line search.
    pub backtrack: f64,
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 200,
            feasibility_tol: 1e-8,
            duality_gap_tol: 1e-8,
            initial_barrier_weight: 1.0,
            barrier_reduction: 0.1,
            armijo: 0.01,
            backtrack: 0.5,
            trace: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.feasibility_tol > 0.0
            && self.duality_gap_tol > 0.0
            && self.initial_barrier_weight > 0.0
            && self.barrier_reduction > 0.0
            && self.barrier_reduction < 1.0
            && self.armijo > 0.0
            && self.armijo < 0.5
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.max_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid solver options: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// ∞-norm of the Lagrangian gradient.
    pub stationarity: f64,
    /// Largest constraint or bound violation, 0 if feasible.
    pub primal_feasibility: f64,
    /// Smallest inequality or bound multiplier.
    pub dual_feasibility: f64,
    /// Largest `|multiplier · slack|`.
    pub complementarity: f64,
}

impl KktResiduals {
    /// All four conditions hold within `tol`.
    pub fn within(&self, tol: f64) -> bool {
        self.stationarity <= tol
            && self.primal_feasibility <= tol
            && self.dual_feasibility >= -tol
            && self.complementarity <= tol
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    /// 0 for the feasibility phase, 1 for the optimization phase.
    pub stage: usize,
    pub newton_iter: usize,
    pub objective: f64,
    pub gap: f64,
    pub step_len: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpSolution {
    pub status: SolveStatus,
    /// Values in the original positive variables.
    pub primal: Vec<f64>,
    pub log_objective: f64,
    /// Multipliers of `≤ 1` constraints, in program order.
    pub inequality_duals: Vec<f64>,
    /// Multipliers of `= 1` constraints, in program order.
    pub equality_duals: Vec<f64>,
    pub lower_bound_duals: Vec<f64>,
    pub upper_bound_duals: Vec<f64>,
    pub inequality_labels: Vec<String>,
    pub equality_labels: Vec<String>,
    pub variable_names: Vec<String>,
    pub iterations: usize,
    pub duality_gap: f64,
    pub kkt: KktResiduals,
    /// Phase-I optimum or equality residual when infeasible.
    pub infeasibility_certificate: Option<f64>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl GpSolution {
    pub fn objective(&self) -> f64 {
        self.log_objective.exp()
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.variable_names
            .iter()
            .position(|n| n == name)
            .map(|j| self.primal[j])
    }

    pub fn dual(&self, label: &str) -> Option<f64> {
        if let Some(i) = self.inequality_labels.iter().position(|l| l == label) {
            return Some(self.inequality_duals[i]);
        }
        self.equality_labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.equality_duals[i])
    }

    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "stage,newton_iter,objective,gap,step_len")?;
        for r in &self.trace {
            writeln!(
                w,
                "{},{},{:.11e},{:.11e},{:.11e}",
                r.stage, r.newton_iter, r.objective, r.gap, r.step_len
            )?;
        }
        Ok(())
    }
}

/// Log-log sensitivities of the optimal objective.
///
/// For a constraint `p(x) ≤ 1` the value is `d log f* / d log c` when the
/// left-hand side is multiplied by `c`; tightening a constraint by 1 %
/// raises the objective by roughly `value` %. Equalities `m(x) = 1` are
/// reported the same way for a scaling of `m`.
pub fn sensitivities(solution: &GpSolution) -> Result<BTreeMap<String, f64>> {
    if solution.status != SolveStatus::Optimal {
        return Err(Error::NotOptimal(format!("status {:?}", solution.status)));
    }
    let mut out = BTreeMap::new();
    for (l, v) in solution.inequality_labels.iter().zip(&solution.inequality_duals) {
        out.insert(l.clone(), *v);
    }
    for (l, v) in solution.equality_labels.iter().zip(&solution.equality_duals) {
        out.insert(l.clone(), *v);
    }
    Ok(out)
}

/// KKT residuals of `solution` as a point of `program`, in log space.
pub fn kkt_residuals(program: &ConvexProgram, solution: &GpSolution) -> KktResiduals {
    let y: Vec<f64> = solution.primal.iter().map(|x| x.ln()).collect();
    let n = program.dim;
    let mut r = vec![0.0; n];
    program.objective.add_gradient(&y, 1.0, &mut r);
    let mut compl: f64 = 0.0;
    let mut min_mult = f64::INFINITY;
    for (f, lam) in program.inequalities.iter().zip(&solution.inequality_duals) {
        f.add_gradient(&y, *lam, &mut r);
        compl = compl.max((lam * f.eval(&y)).abs());
        min_mult = min_mult.min(*lam);
    }
    for (e, nu) in program.equalities.iter().zip(&solution.equality_duals) {
        for &(j, a) in &e.coeffs {
            r[j] += nu * a;
        }
    }
    for j in 0..n {
        let lo = solution.lower_bound_duals[j];
        let hi = solution.upper_bound_duals[j];
        r[j] += hi - lo;
        min_mult = min_mult.min(lo).min(hi);
        if program.lower[j].is_finite() {
            compl = compl.max((lo * (y[j] - program.lower[j])).abs());
        }
        if program.upper[j].is_finite() {
            compl = compl.max((hi * (program.upper[j] - y[j])).abs());
        }
    }
    KktResiduals {
        stationarity: r.iter().fold(0.0, |a, v| a.max(v.abs())),
        primal_feasibility: program.max_violation(&y),
        dual_feasibility: if min_mult.is_finite() { min_mult } else { 0.0 },
        complementarity: compl,
    }
}

pub fn solve_model(model: &GpModel, options: &SolverOptions) -> Result<GpSolution> {
    solve(&log_transform(model), options)
}

pub fn solve(program: &ConvexProgram, options: &SolverOptions) -> Result<GpSolution> {
    options.validate()?;
    let n = program.dim;
    let mut sol = GpSolution {
        status: SolveStatus::Infeasible,
        primal: vec![],
        log_objective: f64::NAN,
        inequality_duals: vec![0.0; program.inequalities.len()],
        equality_duals: vec![0.0; program.equalities.len()],
        lower_bound_duals: vec![0.0; n],
        upper_bound_duals: vec![0.0; n],
        inequality_labels: program.inequality_labels.clone(),
        equality_labels: program.equality_labels.clone(),
        variable_names: program.names.clone(),
        iterations: 0,
        duality_gap: f64::INFINITY,
        kkt: KktResiduals::default(),
        infeasibility_certificate: None,
        trace: vec![],
    };

    let red = match Reduction::new(program) {
        Ok(r) => r,
        Err(residual) => {
            sol.infeasibility_certificate = Some(residual);
            sol.primal = initial_full_point(program).iter().map(|y| y.exp()).collect();
            return Ok(sol);
        }
    };
    let rp = red.reduce(program);
    let mut z = initial_point(&rp);
    let mut trace = Vec::new();

    let start_feasible = rp.ineqs.iter().all(|f| f.eval(&z) < 0.0);
    if !start_feasible {
        let (p1, z1) = phase_one_program(&rp, &z);
        let b1 = Barrier::new(&p1, options, true);
        let r1 = b1.run(z1, &mut trace);
        sol.iterations += r1.iterations;
        match r1.outcome {
            Outcome::Feasible => {
                z = r1.z[..rp.dim].to_vec();
            }
            _ => {
                let s = r1.z[rp.dim];
                sol.status = if r1.outcome == Outcome::Infeasible {
                    SolveStatus::Infeasible
                } else {
                    SolveStatus::IterationLimit
                };
                sol.infeasibility_certificate = Some(s);
                let y = red.expand(&r1.z[..rp.dim]);
                sol.primal = y.iter().map(|v| v.exp()).collect();
                sol.log_objective = program.objective.eval(&y);
                sol.trace = trace;
                return Ok(sol);
            }
        }
    }

    let barrier = Barrier::new(&rp, options, false);
    let res = barrier.run(z, &mut trace);
    sol.iterations += res.iterations;
    sol.duality_gap = res.gap;
    sol.status = match res.outcome {
        Outcome::Converged => SolveStatus::Optimal,
        _ => SolveStatus::IterationLimit,
    };
    log::debug!(
        "interior point finished: {:?}, {} iterations, {} barrier terms",
        sol.status,
        sol.iterations,
        barrier.n_barrier_terms()
    );

    let z = res.z;
    let y = red.expand(&z);
    let (mut lam, mut mu_lo, mut mu_hi) = (res.lam, res.mu_lo, res.mu_hi);
    barrier.polish_duals(&z, &mut lam, &mut mu_lo, &mut mu_hi);
    for (l, origin) in lam.iter().zip(&rp.origin) {
        match *origin {
            Origin::Constraint(i) => sol.inequality_duals[i] = *l,
            Origin::Lower(j) => sol.lower_bound_duals[j] = *l,
            Origin::Upper(j) => sol.upper_bound_duals[j] = *l,
        }
    }
    for (r, &j) in red.free.iter().enumerate() {
        sol.lower_bound_duals[j] = mu_lo[r];
        sol.upper_bound_duals[j] = mu_hi[r];
    }

    // stationarity residual without equality terms, then solve for ν
    let mut resid = vec![0.0; n];
    program.objective.add_gradient(&y, 1.0, &mut resid);
    for (f, lam) in program.inequalities.iter().zip(&sol.inequality_duals) {
        f.add_gradient(&y, *lam, &mut resid);
    }
    for j in 0..n {
        resid[j] += sol.upper_bound_duals[j] - sol.lower_bound_duals[j];
    }
    sol.equality_duals = red.equality_duals(&resid);

    sol.primal = y.iter().map(|v| v.exp()).collect();
    sol.log_objective = program.objective.eval(&y);
    sol.kkt = kkt_residuals(program, &sol);
    sol.trace = trace;
    if sol.status == SolveStatus::Optimal && sol.kkt.primal_feasibility > options.feasibility_tol {
        log::warn!("primal residual {:e} above tolerance", sol.kkt.primal_feasibility);
        sol.status = SolveStatus::IterationLimit;
    }
    Ok(sol)
}

fn initial_full_point(program: &ConvexProgram) -> Vec<f64> {
    (0..program.dim)
        .map(|j| {
            let (lo, hi) = (program.lower[j], program.upper[j]);
            if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                lo + 1.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::expr::Monomial;
    use crate::gp::model::GpModelBuilder;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn lower_bound_constraint_active() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 100.0);
        b.minimize(x)
            .le("c", Monomial::new(3.0, [(x, -1.0)]), Monomial::constant(1.0));
        let s = solve_model(&b.build().unwrap(), &opts()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal[0] - 3.0).abs() < 1e-7, "{}", s.primal[0]);
        assert!((s.dual("c").unwrap() - 1.0).abs() < 1e-7);
        assert!(s.kkt.within(1e-8), "{:?}", s.kkt);
    }

    #[test]
    fn am_gm() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 1e-3, 1e3);
        let y = b.var("y", 1e-3, 1e3);
        b.minimize(Monomial::var(x) + Monomial::var(y)).le(
            "xy",
            Monomial::var(x).recip() * Monomial::var(y).recip(),
            Monomial::constant(1.0),
        );
        let s = solve_model(&b.build().unwrap(), &opts()).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective() - 2.0).abs() < 1e-7);
        assert!((s.primal[0] - 1.0).abs() < 1e-6);
        assert!(s.kkt.within(1e-8), "{:?}", s.kkt);
    }

    #[test]
    fn upper_bound_active() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 1.0, 18.0);
        b.minimize(Monomial::var(x).recip());
        let s = solve_model(&b.build().unwrap(), &opts()).unwrap();
        assert!(s.is_optimal());
        assert!((s.primal[0] - 18.0).abs() < 1e-6);
    }

    #[test]
    fn equalities_are_eliminated_and_dualized() {
        // min x + y  s.t.  x·y = 4  →  x = y = 2, ν = -1/2
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 1e-3, 1e3);
        let y = b.var("y", 1e-3, 1e3);
        b.minimize(Monomial::var(x) + Monomial::var(y)).eq(
            "xy",
            Monomial::var(x) * Monomial::var(y),
            Monomial::constant(4.0),
        );
        let s = solve_model(&b.build().unwrap(), &opts()).unwrap();
        assert!(s.is_optimal());
        assert!((s.primal[0] - 2.0).abs() < 1e-6);
        assert!((s.dual("xy").unwrap() + 0.5).abs() < 1e-6);
        assert!(s.kkt.within(1e-8), "{:?}", s.kkt);
    }

    #[test]
    fn infeasible_is_detected() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 10.0);
        b.minimize(x)
            .le("up", x, Monomial::constant(1.0))
            .ge("down", x, Monomial::constant(2.0));
        let s = solve_model(&b.build().unwrap(), &opts()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.infeasibility_certificate.unwrap() > 0.0);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 10.0);
        b.minimize(x)
            .eq("a", x, Monomial::constant(1.0))
            .eq("b", x, Monomial::constant(2.0));
        let s = solve_model(&b.build().unwrap(), &opts()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn sensitivity_requires_optimal() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 10.0);
        b.minimize(x)
            .le("up", x, Monomial::constant(1.0))
            .ge("down", x, Monomial::constant(2.0));
        let s = solve_model(&b.build().unwrap(), &opts()).unwrap();
        assert!(sensitivities(&s).is_err());
    }

    #[test]
    fn trace_records_iterations() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 100.0);
        b.minimize(x).ge("c", x, Monomial::constant(3.0));
        let o = SolverOptions { trace: true, ..opts() };
        let s = solve_model(&b.build().unwrap(), &o).unwrap();
        assert!(!s.trace.is_empty());
        let mut buf = Vec::new();
        s.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("stage,newton_iter,objective,gap,step_len\n"));
    }
}
