//! Primal-dual interior-point method for inequality-only programs.
//!
//! The Newton system is solved blockwise: variables of one group form a
//! block, ungrouped variables are global, and each function whose gradient
//! spans several blocks contributes its rank-one curvature through an
//! auxiliary variable. Blocks are eliminated onto the globals with a Schur
//! complement.

use std::collections::BTreeMap;

use super::dense::{Lu, SpdFactor};
use super::elimination::ReducedProgram;
use super::{SolverOptions, TraceRow};
use crate::gp::transform::{AffineForm, LogSumExp};

/// Iterative refinement passes on the reduced Newton system.
const REFINE_STEPS: usize = 3;

/// Shortest step the line search tries before declaring a stall.
const MIN_STEP: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
enum Slot {
    Block(usize, usize),
    Global(usize),
}

struct Layout {
    slot: Vec<Slot>,
    block_sizes: Vec<usize>,
    n_global: usize,
    /// Aux index per function; index 0 is the objective.
    aux: Vec<Option<usize>>,
    n_aux: usize,
}

impl Layout {
    fn new(p: &ReducedProgram) -> Layout {
        let term_groups = |t: &AffineForm| {
            let mut g: Vec<usize> = t.coeffs.iter().filter_map(|&(j, _)| p.groups[j]).collect();
            g.sort_unstable();
            g.dedup();
            g
        };
        let fns: Vec<&LogSumExp> = std::iter::once(&p.objective).chain(p.ineqs.iter()).collect();
        let dense = fns.iter().any(|f| f.terms.iter().any(|t| term_groups(t).len() > 1));

        let mut block_of: BTreeMap<usize, usize> = BTreeMap::new();
        let mut block_sizes = Vec::new();
        let mut n_global = 0;
        let mut slot = Vec::with_capacity(p.dim);
        for g in &p.groups {
            match g {
                Some(g) if !dense => {
                    let b = *block_of.entry(*g).or_insert_with(|| {
                        block_sizes.push(0);
                        block_sizes.len() - 1
                    });
                    slot.push(Slot::Block(b, block_sizes[b]));
                    block_sizes[b] += 1;
                }
                _ => {
                    slot.push(Slot::Global(n_global));
                    n_global += 1;
                }
            }
        }

        let mut aux = Vec::with_capacity(fns.len());
        let mut n_aux = 0;
        for f in &fns {
            let mut gs: Vec<usize> = Vec::new();
            for t in &f.terms {
                for &(j, _) in &t.coeffs {
                    if let Slot::Block(b, _) = slot[j] {
                        gs.push(b);
                    }
                }
            }
            gs.sort_unstable();
            gs.dedup();
            if gs.len() > 1 {
                aux.push(Some(n_aux));
                n_aux += 1;
            } else {
                aux.push(None);
            }
        }
        Layout {
            slot,
            block_sizes,
            n_global,
            aux,
            n_aux,
        }
    }

    fn ext(&self) -> usize {
        self.n_global + self.n_aux
    }
}

/// Blockwise symmetric Newton matrix plus right-hand side.
struct System {
    hbb: Vec<Vec<f64>>,
    hbe: Vec<Vec<f64>>,
    hee: Vec<f64>,
}

impl System {
    fn new(l: &Layout) -> System {
        let ext = l.ext();
        System {
            hbb: l.block_sizes.iter().map(|&s| vec![0.0; s * s]).collect(),
            hbe: l.block_sizes.iter().map(|&s| vec![0.0; s * ext]).collect(),
            hee: vec![0.0; ext * ext],
        }
    }

    fn clear(&mut self) {
        self.hbb.iter_mut().for_each(|m| m.fill(0.0));
        self.hbe.iter_mut().for_each(|m| m.fill(0.0));
        self.hee.fill(0.0);
    }

    /// `H += c · a aᵀ` for a vector supported on one block plus globals.
    fn add_outer(&mut self, l: &Layout, c: f64, a: &[(usize, f64)]) {
        let ext = l.ext();
        for &(u, au) in a {
            for &(v, av) in a {
                let h = c * au * av;
                match (l.slot[u], l.slot[v]) {
                    (Slot::Block(b, pu), Slot::Block(b2, pv)) => {
                        debug_assert_eq!(b, b2);
                        let s = l.block_sizes[b];
                        self.hbb[b][pu * s + pv] += h;
                    }
                    (Slot::Block(b, pu), Slot::Global(gv)) => self.hbe[b][pu * ext + gv] += h,
                    (Slot::Global(_), Slot::Block(..)) => {}
                    (Slot::Global(gu), Slot::Global(gv)) => self.hee[gu * ext + gv] += h,
                }
            }
        }
    }

    /// `H += w · g gᵀ` through auxiliary variable `k`.
    fn add_aux(&mut self, l: &Layout, k: usize, w: f64, g: &[(usize, f64)]) {
        let ext = l.ext();
        let a = l.n_global + k;
        if w.abs() < 1e-200 {
            self.hee[a * ext + a] = -1.0;
            return;
        }
        for &(u, gu) in g {
            match l.slot[u] {
                Slot::Block(b, pu) => self.hbe[b][pu * ext + a] += gu,
                Slot::Global(gi) => {
                    self.hee[gi * ext + a] += gu;
                    self.hee[a * ext + gi] += gu;
                }
            }
        }
        self.hee[a * ext + a] = -1.0 / w;
    }

    fn add_diag(&mut self, l: &Layout, j: usize, d: f64) {
        match l.slot[j] {
            Slot::Block(b, p) => {
                let s = l.block_sizes[b];
                self.hbb[b][p * s + p] += d;
            }
            Slot::Global(g) => {
                let ext = l.ext();
                self.hee[g * ext + g] += d;
            }
        }
    }

    /// Factor the diagonal blocks and the Schur complement on the globals.
    fn factor(&self, l: &Layout) -> Option<Factored> {
        let ext = l.ext();
        let nb = l.block_sizes.len();
        let mut s_mat = self.hee.clone();
        let mut facs = Vec::with_capacity(nb);
        let mut ys: Vec<Vec<f64>> = Vec::with_capacity(nb);
        for b in 0..nb {
            let s = l.block_sizes[b];
            let fac = factor_block(s, &self.hbb[b])?;
            // columns of H_bE, solved
            let mut y = vec![0.0; s * ext];
            let mut col = vec![0.0; s];
            for e in 0..ext {
                let mut nz = false;
                for p in 0..s {
                    col[p] = self.hbe[b][p * ext + e];
                    nz |= col[p] != 0.0;
                }
                if !nz {
                    continue;
                }
                fac.solve_in_place(&mut col);
                for p in 0..s {
                    y[p * ext + e] = col[p];
                }
            }
            for e1 in 0..ext {
                for p in 0..s {
                    let h = self.hbe[b][p * ext + e1];
                    if h == 0.0 {
                        continue;
                    }
                    for e2 in 0..ext {
                        s_mat[e1 * ext + e2] -= h * y[p * ext + e2];
                    }
                }
            }
            facs.push(fac);
            ys.push(y);
        }
        let schur = if ext > 0 { Some(Lu::factor(ext, s_mat)?) } else { None };
        Some(Factored { facs, ys, schur })
    }
}

struct Factored {
    facs: Vec<SpdFactor>,
    /// `H_bb⁻¹ H_bE` per block.
    ys: Vec<Vec<f64>>,
    schur: Option<Lu>,
}

impl Factored {
    fn solve(&self, l: &Layout, sys: &System, rhs: &[f64]) -> Option<Vec<f64>> {
        let ext = l.ext();
        let mut rb: Vec<Vec<f64>> = l.block_sizes.iter().map(|&s| vec![0.0; s]).collect();
        let mut re = vec![0.0; ext];
        for (j, r) in rhs.iter().enumerate() {
            match l.slot[j] {
                Slot::Block(b, p) => rb[b][p] = *r,
                Slot::Global(g) => re[g] = *r,
            }
        }
        for (b, fac) in self.facs.iter().enumerate() {
            fac.solve_in_place(&mut rb[b]);
            for (e, r) in re.iter_mut().enumerate() {
                let acc: f64 = (0..l.block_sizes[b]).map(|p| sys.hbe[b][p * ext + e] * rb[b][p]).sum();
                *r -= acc;
            }
        }
        let xe = match &self.schur {
            Some(lu) => lu.solve(&re),
            None => Vec::new(),
        };
        let mut x = vec![0.0; rhs.len()];
        for (j, slot) in l.slot.iter().enumerate() {
            x[j] = match *slot {
                Slot::Block(b, p) => {
                    let mut v = rb[b][p];
                    for (e, xe_e) in xe.iter().enumerate() {
                        v -= self.ys[b][p * ext + e] * xe_e;
                    }
                    v
                }
                Slot::Global(g) => xe[g],
            };
        }
        if x.iter().all(|v| v.is_finite()) {
            Some(x)
        } else {
            None
        }
    }
}

fn factor_block(s: usize, h: &[f64]) -> Option<SpdFactor> {
    if let Some(f) = SpdFactor::factor(s, h.to_vec()) {
        return Some(f);
    }
    let scale = (0..s).map(|p| h[p * s + p].abs()).fold(1e-300, f64::max);
    let mut reg = h.to_vec();
    for p in 0..s {
        reg[p * s + p] += 1e-12 * scale;
    }
    SpdFactor::factor(s, reg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Converged,
    IterationLimit,
    /// Phase I reached a strictly feasible point.
    Feasible,
    /// Phase I converged without one.
    Infeasible,
}

pub(crate) struct BarrierResult {
    pub z: Vec<f64>,
    /// Multipliers of the inequalities.
    pub lam: Vec<f64>,
    pub mu_lo: Vec<f64>,
    pub mu_hi: Vec<f64>,
    pub outcome: Outcome,
    pub iterations: usize,
    /// Surrogate duality gap `Σ λ·slack`.
    pub gap: f64,
}

fn merged_gradient(f: &LogSumExp, q: &[f64]) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = Vec::new();
    for (t, qk) in f.terms.iter().zip(q) {
        all.extend(t.coeffs.iter().map(|&(j, a)| (j, qk * a)));
    }
    all.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(all.len());
    for (j, v) in all {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out
}

pub(crate) struct Barrier<'a> {
    p: &'a ReducedProgram,
    layout: Layout,
    opts: &'a SolverOptions,
    n_barrier_terms: usize,
    /// Phase I stops as soon as every inequality but the slack is negative.
    phase_one: bool,
}

/// Function values and gradients at one point.
struct Eval {
    obj: f64,
    g0: Vec<(usize, f64)>,
    q0: Vec<f64>,
    /// Inequality values `f_i`.
    f: Vec<f64>,
    grads: Vec<Vec<(usize, f64)>>,
    q: Vec<Vec<f64>>,
}

/// Inequality slacks and multipliers; `lo`/`hi` are the box multipliers.
#[derive(Clone)]
struct Iterate {
    s: Vec<f64>,
    lam: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Iterate {
    fn step(&self, d: &Iterate, a: f64) -> Iterate {
        let mv = |x: &[f64], dx: &[f64]| x.iter().zip(dx).map(|(v, dv)| v + a * dv).collect();
        Iterate {
            s: mv(&self.s, &d.s),
            lam: mv(&self.lam, &d.lam),
            lo: mv(&self.lo, &d.lo),
            hi: mv(&self.hi, &d.hi),
        }
    }
}

impl<'a> Barrier<'a> {
    pub(crate) fn new(p: &'a ReducedProgram, opts: &'a SolverOptions, phase_one: bool) -> Self {
        let boxes: usize = (0..p.dim)
            .map(|j| usize::from(p.lower[j].is_finite()) + usize::from(p.upper[j].is_finite()))
            .sum();
        Barrier {
            p,
            layout: Layout::new(p),
            opts,
            n_barrier_terms: p.ineqs.len() + boxes,
            phase_one,
        }
    }

    pub(crate) fn n_barrier_terms(&self) -> usize {
        self.n_barrier_terms
    }

    fn inside_box(&self, z: &[f64]) -> bool {
        (0..self.p.dim).all(|j| z[j] > self.p.lower[j] && z[j] < self.p.upper[j])
    }

    /// Original inequalities are satisfied (slack excluded).
    fn phase_one_done(&self, z: &[f64]) -> bool {
        let s = z[self.p.dim - 1];
        self.p.ineqs.iter().all(|f| f.eval(z) + s < 0.0)
    }

    fn evaluate(&self, z: &[f64]) -> Eval {
        let mut q0 = Vec::new();
        let obj = self.p.objective.eval_weights(z, &mut q0);
        let g0 = merged_gradient(&self.p.objective, &q0);
        let mut fv = Vec::with_capacity(self.p.ineqs.len());
        let mut grads = Vec::with_capacity(self.p.ineqs.len());
        let mut qs = Vec::with_capacity(self.p.ineqs.len());
        for f in &self.p.ineqs {
            let mut q = Vec::new();
            fv.push(f.eval_weights(z, &mut q));
            grads.push(merged_gradient(f, &q));
            qs.push(q);
        }
        Eval {
            obj,
            g0,
            q0,
            f: fv,
            grads,
            q: qs,
        }
    }

    fn box_slacks(&self, z: &[f64], j: usize) -> (f64, f64) {
        (z[j] - self.p.lower[j], self.p.upper[j] - z[j])
    }

    fn gap(&self, z: &[f64], it: &Iterate) -> f64 {
        let mut g: f64 = it.s.iter().zip(&it.lam).map(|(s, l)| s * l).sum();
        for j in 0..self.p.dim {
            let (sl, su) = self.box_slacks(z, j);
            if sl.is_finite() {
                g += it.lo[j] * sl;
            }
            if su.is_finite() {
                g += it.hi[j] * su;
            }
        }
        g
    }

    fn dual_residual(&self, ev: &Eval, it: &Iterate) -> Vec<f64> {
        let mut r = vec![0.0; self.p.dim];
        for &(j, v) in &ev.g0 {
            r[j] += v;
        }
        for (g, l) in ev.grads.iter().zip(&it.lam) {
            for &(j, v) in g {
                r[j] += l * v;
            }
        }
        for j in 0..self.p.dim {
            r[j] += it.hi[j] - it.lo[j];
        }
        r
    }

    /// Largest `f_i + s_i`.
    fn primal_residual(ev: &Eval, it: &Iterate) -> f64 {
        ev.f.iter().zip(&it.s).fold(0.0, |a, (f, s)| a.max((f + s).abs()))
    }

    /// Euclidean norm of the dual, primal and centering residuals for weight `t`.
    fn residual_norm(&self, ev: &Eval, z: &[f64], it: &Iterate, t: f64) -> f64 {
        let mut acc: f64 = self.dual_residual(ev, it).iter().map(|v| v * v).sum();
        let inv_t = 1.0 / t;
        for ((f, s), l) in ev.f.iter().zip(&it.s).zip(&it.lam) {
            acc += (f + s).powi(2) + (l * s - inv_t).powi(2);
        }
        for j in 0..self.p.dim {
            let (sl, su) = self.box_slacks(z, j);
            if sl.is_finite() {
                acc += (it.lo[j] * sl - inv_t).powi(2);
            }
            if su.is_finite() {
                acc += (it.hi[j] * su - inv_t).powi(2);
            }
        }
        acc.sqrt()
    }

    /// Reduced Newton matrix `∇²f₀ + Σ λ∇²fᵢ + Σ (λ/s) ∇fᵢ∇fᵢᵀ` plus box terms.
    fn assemble(&self, ev: &Eval, z: &[f64], it: &Iterate, sys: &mut System) {
        let l = &self.layout;
        sys.clear();
        let fns = std::iter::once((&self.p.objective, &ev.q0, &ev.g0, 1.0, -1.0)).chain(
            self.p
                .ineqs
                .iter()
                .zip(&ev.q)
                .zip(&ev.grads)
                .zip(it.s.iter().zip(&it.lam))
                .map(|(((f, q), g), (s, lam))| (f, q, g, *lam, lam / s - lam)),
        );
        for (idx, (f, q, g, c_terms, c_rank)) in fns.enumerate() {
            if f.is_affine() {
                // Σ q a aᵀ − g gᵀ vanishes for one term
                if idx > 0 {
                    let w = c_rank + c_terms;
                    match l.aux[idx] {
                        Some(k) => sys.add_aux(l, k, w, g),
                        None => sys.add_outer(l, w, g),
                    }
                }
                continue;
            }
            for (term, qk) in f.terms.iter().zip(q) {
                sys.add_outer(l, c_terms * qk, &term.coeffs);
            }
            match l.aux[idx] {
                Some(k) => sys.add_aux(l, k, c_rank, g),
                None => sys.add_outer(l, c_rank, g),
            }
        }
        for j in 0..self.p.dim {
            let (sl, su) = self.box_slacks(z, j);
            let mut diag = 0.0;
            if sl.is_finite() {
                diag += it.lo[j] / sl;
            }
            if su.is_finite() {
                diag += it.hi[j] / su;
            }
            if diag > 0.0 {
                sys.add_diag(l, j, diag);
            }
        }
    }

    /// Product of the reduced Newton matrix with `v`, without rounding from
    /// the block elimination.
    fn apply(&self, ev: &Eval, z: &[f64], it: &Iterate, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        let dot = |a: &[(usize, f64)]| a.iter().map(|&(j, x)| x * v[j]).sum::<f64>();
        let curvature = |f: &LogSumExp, q: &[f64], g: &[(usize, f64)], c: f64, out: &mut Vec<f64>| {
            for (term, qk) in f.terms.iter().zip(q) {
                let w = c * qk * dot(&term.coeffs);
                for &(j, a) in &term.coeffs {
                    out[j] += w * a;
                }
            }
            let w = c * dot(g);
            for &(j, a) in g {
                out[j] -= w * a;
            }
        };
        if !self.p.objective.is_affine() {
            curvature(&self.p.objective, &ev.q0, &ev.g0, 1.0, &mut out);
        }
        for (((f, q), g), (s, lam)) in self
            .p
            .ineqs
            .iter()
            .zip(&ev.q)
            .zip(&ev.grads)
            .zip(it.s.iter().zip(&it.lam))
        {
            if !f.is_affine() {
                curvature(f, q, g, *lam, &mut out);
            }
            let w = lam / s * dot(g);
            for &(j, a) in g {
                out[j] += w * a;
            }
        }
        for j in 0..self.p.dim {
            let (sl, su) = self.box_slacks(z, j);
            if sl.is_finite() {
                out[j] += it.lo[j] / sl * v[j];
            }
            if su.is_finite() {
                out[j] += it.hi[j] / su * v[j];
            }
        }
        out
    }

    /// Newton direction for barrier weight `t`, or `None` if the system is singular.
    fn direction(&self, ev: &Eval, z: &[f64], it: &Iterate, t: f64, sys: &mut System) -> Option<(Vec<f64>, Iterate)> {
        let n = self.p.dim;
        let inv_t = 1.0 / t;
        self.assemble(ev, z, it, sys);
        let mut rhs = vec![0.0; n];
        for &(j, v) in &ev.g0 {
            rhs[j] -= v;
        }
        for (((g, f), s), l) in ev.grads.iter().zip(&ev.f).zip(&it.s).zip(&it.lam) {
            let c = (l * (f + s) + inv_t) / s;
            for &(j, v) in g {
                rhs[j] -= c * v;
            }
        }
        for j in 0..n {
            let (sl, su) = self.box_slacks(z, j);
            if sl.is_finite() {
                rhs[j] += inv_t / sl;
            }
            if su.is_finite() {
                rhs[j] -= inv_t / su;
            }
        }
        let fac = sys.factor(&self.layout)?;
        let mut dz = fac.solve(&self.layout, sys, &rhs)?;
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let mut res_norm = f64::INFINITY;
        for _ in 0..REFINE_STEPS {
            let kdz = self.apply(ev, z, it, &dz);
            let res: Vec<f64> = rhs.iter().zip(&kdz).map(|(r, k)| r - k).collect();
            let rn = norm(&res);
            if rn >= 0.5 * res_norm || rn <= f64::EPSILON * norm(&rhs) {
                break;
            }
            res_norm = rn;
            let corr = fac.solve(&self.layout, sys, &res)?;
            dz.iter_mut().zip(&corr).for_each(|(d, c)| *d += c);
        }

        let m = self.p.ineqs.len();
        let mut ds = Vec::with_capacity(m);
        let mut dlam = Vec::with_capacity(m);
        for (((g, f), s), l) in ev.grads.iter().zip(&ev.f).zip(&it.s).zip(&it.lam) {
            let gdz: f64 = g.iter().map(|&(j, v)| v * dz[j]).sum();
            ds.push(-(f + s) - gdz);
            dlam.push(l * (gdz + f + s) / s - l + inv_t / s);
        }
        let mut dlo = vec![0.0; n];
        let mut dhi = vec![0.0; n];
        for j in 0..n {
            let (sl, su) = self.box_slacks(z, j);
            if sl.is_finite() {
                dlo[j] = -it.lo[j] + (inv_t - it.lo[j] * dz[j]) / sl;
            }
            if su.is_finite() {
                dhi[j] = -it.hi[j] + (inv_t + it.hi[j] * dz[j]) / su;
            }
        }
        Some((
            dz,
            Iterate {
                s: ds,
                lam: dlam,
                lo: dlo,
                hi: dhi,
            },
        ))
    }

    /// Longest step in (0, 1] keeping slacks, multipliers and box slacks positive.
    fn max_step(&self, z: &[f64], dz: &[f64], it: &Iterate, d: &Iterate) -> f64 {
        let mut a: f64 = 1.0;
        let pairs =
            it.s.iter()
                .chain(&it.lam)
                .chain(&it.lo)
                .chain(&it.hi)
                .zip(d.s.iter().chain(&d.lam).chain(&d.lo).chain(&d.hi));
        for (v, dv) in pairs {
            if *dv < 0.0 {
                a = a.min(-v / dv);
            }
        }
        for j in 0..self.p.dim {
            let (sl, su) = self.box_slacks(z, j);
            if dz[j] < 0.0 && sl.is_finite() {
                a = a.min(sl / -dz[j]);
            }
            if dz[j] > 0.0 && su.is_finite() {
                a = a.min(su / dz[j]);
            }
        }
        a
    }

    /// Primal-dual interior-point iterations from `z`, which must lie inside
    /// the box and satisfy the inequalities strictly.
    pub(crate) fn run(&self, mut z: Vec<f64>, trace: &mut Vec<TraceRow>) -> BarrierResult {
        let o = self.opts;
        let n = self.p.dim;
        let m = self.n_barrier_terms.max(1) as f64;
        let mut sys = System::new(&self.layout);

        let mut ev = self.evaluate(&z);
        debug_assert!(self.inside_box(&z) && ev.f.iter().all(|f| *f < 0.0));
        let s: Vec<f64> = ev.f.iter().map(|f| -f).collect();
        let w = o.initial_barrier_weight;
        let mut cur = Iterate {
            lam: s.iter().map(|s| w / s).collect(),
            s,
            lo: (0..n).map(|j| zero_if_inf(w / self.box_slacks(&z, j).0)).collect(),
            hi: (0..n).map(|j| zero_if_inf(w / self.box_slacks(&z, j).1)).collect(),
        };
        let finish = |z, it: Iterate, outcome, iterations, gap| BarrierResult {
            z,
            lam: it.lam,
            mu_lo: it.lo,
            mu_hi: it.hi,
            outcome,
            iterations,
            gap,
        };

        for k in 0..o.max_iterations {
            if self.phase_one && self.phase_one_done(&z) {
                let gap = self.gap(&z, &cur);
                return finish(z, cur, Outcome::Feasible, k, gap);
            }
            let gap = self.gap(&z, &cur);
            let rd = self.dual_residual(&ev, &cur).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let rp = Self::primal_residual(&ev, &cur);
            if gap <= o.duality_gap_tol && rd <= o.feasibility_tol && rp <= o.feasibility_tol {
                let outcome = if self.phase_one {
                    Outcome::Infeasible
                } else {
                    Outcome::Converged
                };
                return finish(z, cur, outcome, k, gap);
            }
            let t = m / (o.barrier_reduction * gap);

            let Some((dz, d)) = self.direction(&ev, &z, &cur, t, &mut sys) else {
                log::debug!("newton system singular at iteration {k}");
                return finish(z, cur, Outcome::IterationLimit, k, gap);
            };
            let mut step = 0.99 * self.max_step(&z, &dz, &cur, &d);
            let r0 = self.residual_norm(&ev, &z, &cur, t);
            let mut trial = vec![0.0; n];
            let mut accepted = None;
            while step > MIN_STEP {
                for j in 0..n {
                    trial[j] = z[j] + step * dz[j];
                }
                let mut next = cur.step(&d, step);
                let et = self.evaluate(&trial);
                reset_slacks(&et, &mut next, t);
                if et.f.iter().all(|f| f.is_finite())
                    && self.residual_norm(&et, &trial, &next, t) <= (1.0 - o.armijo * step) * r0
                {
                    accepted = Some((et, next));
                    break;
                }
                step *= o.backtrack;
            }
            if o.trace {
                trace.push(TraceRow {
                    stage: usize::from(!self.phase_one),
                    newton_iter: k,
                    objective: ev.obj,
                    gap,
                    step_len: if accepted.is_some() { step } else { 0.0 },
                });
            }
            let Some((et, next)) = accepted else {
                log::debug!("line search stalled at iteration {k}, gap {gap:e}, residuals {rd:e} {rp:e}");
                return finish(z, cur, Outcome::IterationLimit, k + 1, gap);
            };
            std::mem::swap(&mut z, &mut trial);
            ev = et;
            cur = next;
        }
        let gap = self.gap(&z, &cur);
        finish(z, cur, Outcome::IterationLimit, o.max_iterations, gap)
    }
}

/// Replace a slack by the actual constraint margin wherever that lowers the
/// constraint's share of the residual. Keeps inactive constraints from
/// lagging behind a primal point that drifts along a flat direction.
fn reset_slacks(ev: &Eval, it: &mut Iterate, t: f64) {
    let inv_t = 1.0 / t;
    for ((f, s), l) in ev.f.iter().zip(it.s.iter_mut()).zip(&it.lam) {
        if *f < 0.0 {
            let old = (f + *s).powi(2) + (l * *s - inv_t).powi(2);
            let new = (l * -f - inv_t).powi(2);
            if new < old {
                *s = -f;
            }
        }
    }
}

fn zero_if_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

impl Barrier<'_> {
    /// Correct barrier multiplier estimates so the Lagrangian gradient
    /// vanishes at `z`.
    ///
    /// `1/(t·slack)` carries a relative error of order `ε·t·λ`, which is far
    /// above the stationarity tolerance once `t` is large. The correction is
    /// the least-norm change in the metric `diag(λ²)`, so near-zero
    /// multipliers of inactive constraints stay near zero.
    pub(crate) fn polish_duals(&self, z: &[f64], lam: &mut [f64], mu_lo: &mut [f64], mu_hi: &mut [f64]) {
        let l = &self.layout;
        let mut sys = System::new(l);
        let mut q = Vec::new();
        let grads: Vec<Vec<(usize, f64)>> = self
            .p
            .ineqs
            .iter()
            .map(|f| {
                f.eval_weights(z, &mut q);
                merged_gradient(f, &q)
            })
            .collect();
        self.p.objective.eval_weights(z, &mut q);
        let g0 = merged_gradient(&self.p.objective, &q);
        let residual = |lam: &[f64], mu_lo: &[f64], mu_hi: &[f64]| {
            let mut r = vec![0.0; self.p.dim];
            for &(j, v) in &g0 {
                r[j] += v;
            }
            for (g, lm) in grads.iter().zip(lam) {
                for &(j, v) in g {
                    r[j] += lm * v;
                }
            }
            for j in 0..self.p.dim {
                r[j] += mu_hi[j] - mu_lo[j];
            }
            r
        };
        let inf_norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut r = residual(lam, mu_lo, mu_hi);
        for _ in 0..3 {
            sys.clear();
            if let Some(k) = l.aux[0] {
                sys.add_aux(l, k, 0.0, &[]);
            }
            for (i, (g, lm)) in grads.iter().zip(lam.iter()).enumerate() {
                let w = lm * lm;
                match l.aux[i + 1] {
                    Some(k) => sys.add_aux(l, k, w, g),
                    None => sys.add_outer(l, w, g),
                }
            }
            for j in 0..self.p.dim {
                let d = mu_lo[j] * mu_lo[j] + mu_hi[j] * mu_hi[j];
                sys.add_diag(l, j, d.max(f64::MIN_POSITIVE));
            }
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let Some(x) = sys.factor(l).and_then(|f| f.solve(l, &sys, &rhs)) else {
                return;
            };
            let new_lam: Vec<f64> = grads
                .iter()
                .zip(lam.iter())
                .map(|(g, lm)| {
                    let gx: f64 = g.iter().map(|&(j, v)| v * x[j]).sum();
                    (lm + lm * lm * gx).max(0.0)
                })
                .collect();
            let new_lo: Vec<f64> = (0..self.p.dim)
                .map(|j| (mu_lo[j] - mu_lo[j] * mu_lo[j] * x[j]).max(0.0))
                .collect();
            let new_hi: Vec<f64> = (0..self.p.dim)
                .map(|j| (mu_hi[j] + mu_hi[j] * mu_hi[j] * x[j]).max(0.0))
                .collect();
            let new_r = residual(&new_lam, &new_lo, &new_hi);
            // keep the multipliers the method produced unless the step helps
            if !(inf_norm(&new_r) < inf_norm(&r)) {
                return;
            }
            lam.copy_from_slice(&new_lam);
            mu_lo.copy_from_slice(&new_lo);
            mu_hi.copy_from_slice(&new_hi);
            r = new_r;
        }
    }
}

/// Interior start: box midpoints, or one unit inside a single finite side.
pub(crate) fn initial_point(p: &ReducedProgram) -> Vec<f64> {
    (0..p.dim)
        .map(|j| match (p.lower[j].is_finite(), p.upper[j].is_finite()) {
            (true, true) => 0.5 * (p.lower[j] + p.upper[j]),
            (true, false) => p.lower[j] + 1.0,
            (false, true) => p.upper[j] - 1.0,
            (false, false) => 0.0,
        })
        .collect()
}

/// Append a global slack `s` to every inequality term and minimize it.
pub(crate) fn phase_one_program(p: &ReducedProgram, z0: &[f64]) -> (ReducedProgram, Vec<f64>) {
    let s_idx = p.dim;
    let ineqs: Vec<LogSumExp> = p
        .ineqs
        .iter()
        .map(|f| LogSumExp {
            terms: f
                .terms
                .iter()
                .map(|t| {
                    let mut c = t.coeffs.clone();
                    c.push((s_idx, -1.0));
                    AffineForm {
                        constant: t.constant,
                        coeffs: c,
                    }
                })
                .collect(),
        })
        .collect();
    let max_f = p.ineqs.iter().map(|f| f.eval(z0)).fold(f64::NEG_INFINITY, f64::max);
    let s0 = max_f.max(0.0) + 1.0;
    let mut lower = p.lower.clone();
    let mut upper = p.upper.clone();
    lower.push(-1.0);
    upper.push(f64::INFINITY);
    let mut groups = p.groups.clone();
    groups.push(None);
    let mut z = z0.to_vec();
    z.push(s0);
    (
        ReducedProgram {
            dim: p.dim + 1,
            objective: LogSumExp {
                terms: vec![AffineForm {
                    constant: 0.0,
                    coeffs: vec![(s_idx, 1.0)],
                }],
            },
            ineqs,
            origin: p.origin.clone(),
            lower,
            upper,
            groups,
        },
        z,
    )
}
