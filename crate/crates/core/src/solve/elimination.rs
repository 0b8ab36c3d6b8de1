//! Sparse elimination of affine equalities.
//!
//! Each kept equality solves for one pivot variable. Pivots are picked from
//! grouped (per-scenario) variables when possible so the reduced program keeps
//! its block structure. Bounds of eliminated variables turn into affine
//! inequalities on the free variables.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::gp::transform::{AffineForm, ConvexProgram, LogSumExp};

type Sparse = Vec<(usize, f64)>;

/// `row += alpha · other`, both sorted by index.
fn axpy(row: &Sparse, alpha: f64, other: &[(usize, f64)]) -> Sparse {
    let mut out = Vec::with_capacity(row.len() + other.len());
    let (mut i, mut j) = (0, 0);
    while i < row.len() || j < other.len() {
        let take_row = j >= other.len() || (i < row.len() && row[i].0 < other[j].0);
        let take_other = i >= row.len() || (j < other.len() && other[j].0 < row[i].0);
        if take_row {
            out.push(row[i]);
            i += 1;
        } else if take_other {
            out.push((other[j].0, alpha * other[j].1));
            j += 1;
        } else {
            out.push((row[i].0, row[i].1 + alpha * other[j].1));
            i += 1;
            j += 1;
        }
    }
    out
}

/// Drop entries that are zero or negligible against the largest one.
fn prune(row: &mut Sparse) {
    let scale = row.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
    row.retain(|e| e.1.abs() > 1e-14 * scale);
}

#[derive(Debug, Clone)]
pub(crate) enum Expr {
    Free(usize),
    Eliminated { constant: f64, coeffs: Sparse },
}

#[derive(Debug, Clone)]
struct KeptRow {
    eq: usize,
    pivot: usize,
    row: Sparse,
    constant: f64,
    /// `(kept index, multiplier)` pairs used to reduce this row.
    mults: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Reduction {
    pub free: Vec<usize>,
    pub exprs: Vec<Expr>,
    kept: Vec<KeptRow>,
    n_eq: usize,
}

/// Where a reduced inequality came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Origin {
    Constraint(usize),
    Lower(usize),
    Upper(usize),
}

/// An inequality-only program over the free variables.
#[derive(Debug, Clone)]
pub(crate) struct ReducedProgram {
    pub dim: usize,
    pub objective: LogSumExp,
    pub ineqs: Vec<LogSumExp>,
    pub origin: Vec<Origin>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub groups: Vec<Option<usize>>,
}

impl Reduction {
    /// Eliminate the equalities of `program`. On an inconsistent system the
    /// error carries the absolute residual of the offending row.
    pub(crate) fn new(program: &ConvexProgram) -> Result<Reduction, f64> {
        let n = program.dim;
        let mut pivot_of: Vec<Option<usize>> = vec![None; n];
        let mut kept: Vec<KeptRow> = Vec::new();

        for (e, eq) in program.equalities.iter().enumerate() {
            let mut row: Sparse = eq.coeffs.clone();
            row.sort_by_key(|x| x.0);
            let mut constant = eq.constant;
            let mut mults = Vec::new();
            let mut heap: BinaryHeap<Reverse<usize>> =
                row.iter().filter_map(|(j, _)| pivot_of[*j].map(Reverse)).collect();
            while let Some(Reverse(k)) = heap.pop() {
                let p = kept[k].pivot;
                let Ok(pos) = row.binary_search_by_key(&p, |x| x.0) else {
                    continue;
                };
                let mult = row[pos].1 / pivot_coeff(&kept[k]);
                let mut next = axpy(&row, -mult, &kept[k].row);
                next.retain(|x| x.0 != p);
                prune(&mut next);
                row = next;
                constant -= mult * kept[k].constant;
                mults.push((k, mult));
                for (j, _) in &kept[k].row {
                    if let Some(k2) = pivot_of[*j] {
                        if k2 > k {
                            heap.push(Reverse(k2));
                        }
                    }
                }
            }
            if row.is_empty() {
                if constant.abs() > 1e-9 * (1.0 + eq.constant.abs()) {
                    return Err(constant.abs());
                }
                continue;
            }
            let pivot = choose_pivot(&row, &program.groups);
            pivot_of[pivot] = Some(kept.len());
            kept.push(KeptRow {
                eq: e,
                pivot,
                row,
                constant,
                mults,
            });
        }

        let mut free = Vec::new();
        let mut exprs = Vec::with_capacity(n);
        for (j, p) in pivot_of.iter().enumerate() {
            if p.is_none() {
                exprs.push(Expr::Free(free.len()));
                free.push(j);
            } else {
                exprs.push(Expr::Eliminated {
                    constant: 0.0,
                    coeffs: Vec::new(),
                });
            }
        }
        for k in (0..kept.len()).rev() {
            let kr = &kept[k];
            let cp = pivot_coeff(kr);
            let mut constant = -kr.constant / cp;
            let mut acc: Sparse = Vec::new();
            for &(j, a) in &kr.row {
                if j == kr.pivot {
                    continue;
                }
                let w = -a / cp;
                match &exprs[j] {
                    Expr::Free(r) => acc = axpy(&acc, w, &[(*r, 1.0)]),
                    Expr::Eliminated { constant: c0, coeffs } => {
                        constant += w * c0;
                        acc = axpy(&acc, w, coeffs);
                    }
                }
            }
            prune(&mut acc);
            exprs[kr.pivot] = Expr::Eliminated { constant, coeffs: acc };
        }
        Ok(Reduction {
            free,
            exprs,
            kept,
            n_eq: program.equalities.len(),
        })
    }

    pub(crate) fn substitute(&self, form: &AffineForm) -> AffineForm {
        let mut constant = form.constant;
        let mut acc: Sparse = Vec::new();
        for &(j, a) in &form.coeffs {
            match &self.exprs[j] {
                Expr::Free(r) => acc = axpy(&acc, a, &[(*r, 1.0)]),
                Expr::Eliminated { constant: c0, coeffs } => {
                    constant += a * c0;
                    acc = axpy(&acc, a, coeffs);
                }
            }
        }
        prune(&mut acc);
        AffineForm { constant, coeffs: acc }
    }

    pub(crate) fn reduce(&self, program: &ConvexProgram) -> ReducedProgram {
        let lse = |f: &LogSumExp| LogSumExp {
            terms: f.terms.iter().map(|t| self.substitute(t)).collect(),
        };
        let mut ineqs: Vec<LogSumExp> = program.inequalities.iter().map(lse).collect();
        let mut origin: Vec<Origin> = (0..ineqs.len()).map(Origin::Constraint).collect();
        for (j, e) in self.exprs.iter().enumerate() {
            if let Expr::Eliminated { constant, coeffs } = e {
                // lower - y ≤ 0
                if program.lower[j].is_finite() {
                    ineqs.push(LogSumExp {
                        terms: vec![AffineForm {
                            constant: program.lower[j] - constant,
                            coeffs: coeffs.iter().map(|&(r, a)| (r, -a)).collect(),
                        }],
                    });
                    origin.push(Origin::Lower(j));
                }
                if program.upper[j].is_finite() {
                    ineqs.push(LogSumExp {
                        terms: vec![AffineForm {
                            constant: constant - program.upper[j],
                            coeffs: coeffs.clone(),
                        }],
                    });
                    origin.push(Origin::Upper(j));
                }
            }
        }
        ReducedProgram {
            dim: self.free.len(),
            objective: lse(&program.objective),
            ineqs,
            origin,
            lower: self.free.iter().map(|&j| program.lower[j]).collect(),
            upper: self.free.iter().map(|&j| program.upper[j]).collect(),
            groups: self.free.iter().map(|&j| program.groups[j]).collect(),
        }
    }

    /// Full-space point from free values.
    pub(crate) fn expand(&self, z: &[f64]) -> Vec<f64> {
        self.exprs
            .iter()
            .map(|e| match e {
                Expr::Free(r) => z[*r],
                Expr::Eliminated { constant, coeffs } => coeffs.iter().fold(*constant, |acc, &(r, a)| acc + a * z[r]),
            })
            .collect()
    }

    /// Equality multipliers `ν` with `Aᵀν = −r` on the pivot columns, where
    /// `r` is the full-space stationarity residual without equality terms.
    pub(crate) fn equality_duals(&self, r: &[f64]) -> Vec<f64> {
        let m = self.kept.len();
        let mut kept_of_pivot = vec![usize::MAX; r.len()];
        for (k, kr) in self.kept.iter().enumerate() {
            kept_of_pivot[kr.pivot] = k;
        }
        // Ĉᵀ w = −r on pivots, lower triangular in kept order
        let mut acc = vec![0.0; m];
        let mut w = vec![0.0; m];
        for k in 0..m {
            let kr = &self.kept[k];
            w[k] = (-r[kr.pivot] - acc[k]) / pivot_coeff(kr);
            for &(j, a) in &kr.row {
                let k2 = kept_of_pivot[j];
                if k2 != usize::MAX && k2 > k {
                    acc[k2] += a * w[k];
                }
            }
        }
        // Lᵀ ν = w
        let mut back = vec![0.0; m];
        let mut nu_kept = vec![0.0; m];
        for k in (0..m).rev() {
            nu_kept[k] = w[k] - back[k];
            for &(k0, mult) in &self.kept[k].mults {
                back[k0] += mult * nu_kept[k];
            }
        }
        let mut nu = vec![0.0; self.n_eq];
        for (k, kr) in self.kept.iter().enumerate() {
            nu[kr.eq] = nu_kept[k];
        }
        nu
    }
}

fn pivot_coeff(kr: &KeptRow) -> f64 {
    let pos = kr
        .row
        .binary_search_by_key(&kr.pivot, |x| x.0)
        .expect("pivot present in its row");
    kr.row[pos].1
}

fn choose_pivot(row: &Sparse, groups: &[Option<usize>]) -> usize {
    let scale = row.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
    let usable = |e: &&(usize, f64)| e.1.abs() >= 1e-6 * scale;
    let pick = |grouped: bool| {
        row.iter()
            .filter(usable)
            .filter(|e| groups[e.0].is_some() == grouped)
            .fold(None::<(usize, f64)>, |best, &(j, a)| match best {
                Some((_, b)) if b >= a.abs() => best,
                _ => Some((j, a.abs())),
            })
    };
    pick(true).or_else(|| pick(false)).expect("non-empty row").0
}
