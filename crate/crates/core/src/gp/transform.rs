//! Log transform of a geometric program into a convex program in `y = log x`.

use serde::{Deserialize, Serialize};

use super::expr::{Monomial, Posynomial};
use super::model::{ConstraintKind, GpModel};

/// `c + Σ a_j y_j`, coefficients sorted by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineForm {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl AffineForm {
    pub fn from_monomial(m: &Monomial) -> Self {
        AffineForm {
            constant: m.coefficient().ln(),
            coeffs: m.exponents().map(|(v, a)| (v.0, a)).collect(),
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().fold(self.constant, |acc, &(j, a)| acc + a * y[j])
    }
}

/// `log Σ_k exp(a_k·y + c_k)`; a single term is an affine function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSumExp {
    pub terms: Vec<AffineForm>,
}

impl LogSumExp {
    pub fn from_posynomial(p: &Posynomial) -> Self {
        LogSumExp {
            terms: p.terms().iter().map(AffineForm::from_monomial).collect(),
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        if let [t] = self.terms.as_slice() {
            return t.eval(y);
        }
        let vals: Vec<f64> = self.terms.iter().map(|t| t.eval(y)).collect();
        lse(&vals)
    }

    /// Value and softmax weights `q_k`, with `∇f = Σ q_k a_k`.
    pub fn eval_weights(&self, y: &[f64], q: &mut Vec<f64>) -> f64 {
        q.clear();
        if let [t] = self.terms.as_slice() {
            q.push(1.0);
            return t.eval(y);
        }
        q.extend(self.terms.iter().map(|t| t.eval(y)));
        let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in q.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in q.iter_mut() {
            *v /= s;
        }
        m + s.ln()
    }

    /// Dense gradient accumulated as `out += scale · ∇f(y)`.
    pub fn add_gradient(&self, y: &[f64], scale: f64, out: &mut [f64]) {
        let mut q = Vec::new();
        self.eval_weights(y, &mut q);
        for (t, qk) in self.terms.iter().zip(&q) {
            for &(j, a) in &t.coeffs {
                out[j] += scale * qk * a;
            }
        }
    }

    pub fn is_affine(&self) -> bool {
        self.terms.len() == 1
    }
}

/// Max-shifted `log Σ exp(v_k)`.
pub fn lse(vals: &[f64]) -> f64 {
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Minimize `objective(y)` subject to `inequalities ≤ 0`, `equalities = 0`
/// and `lower ≤ y ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexProgram {
    pub dim: usize,
    pub objective: LogSumExp,
    pub inequalities: Vec<LogSumExp>,
    pub inequality_labels: Vec<String>,
    pub equalities: Vec<AffineForm>,
    pub equality_labels: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub names: Vec<String>,
    pub groups: Vec<Option<usize>>,
}

impl ConvexProgram {
    /// Objective value in log space.
    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.eval(y)
    }

    pub fn max_violation(&self, y: &[f64]) -> f64 {
        let ineq = self.inequalities.iter().map(|f| f.eval(y)).fold(0.0f64, f64::max);
        let eq = self.equalities.iter().map(|e| e.eval(y).abs()).fold(0.0f64, f64::max);
        let bounds = (0..self.dim)
            .map(|j| (self.lower[j] - y[j]).max(y[j] - self.upper[j]))
            .fold(0.0f64, f64::max);
        ineq.max(eq).max(bounds)
    }
}

/// Map a validated model into log space.
pub fn log_transform(model: &GpModel) -> ConvexProgram {
    let mut inequalities = Vec::new();
    let mut inequality_labels = Vec::new();
    let mut equalities = Vec::new();
    let mut equality_labels = Vec::new();
    for c in model.constraints() {
        match &c.kind {
            ConstraintKind::Le(p) => {
                inequalities.push(LogSumExp::from_posynomial(p));
                inequality_labels.push(c.label.clone());
            }
            ConstraintKind::Eq(m) => {
                equalities.push(AffineForm::from_monomial(m));
                equality_labels.push(c.label.clone());
            }
        }
    }
    let vars = model.variables();
    ConvexProgram {
        dim: vars.len(),
        objective: LogSumExp::from_posynomial(model.objective()),
        inequalities,
        inequality_labels,
        equalities,
        equality_labels,
        lower: vars.iter().map(|v| v.lower.ln()).collect(),
        upper: vars.iter().map(|v| v.upper.ln()).collect(),
        names: vars.iter().map(|v| v.name.clone()).collect(),
        groups: vars.iter().map(|v| v.group).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::expr::VarId;
    use crate::gp::model::GpModelBuilder;
    use proptest::prelude::*;

    #[test]
    fn monomial_to_affine() {
        let m = Monomial::new(5.0, [(VarId(0), 2.0)]);
        let a = AffineForm::from_monomial(&m);
        assert_eq!(a.constant, 5f64.ln());
        assert_eq!(a.coeffs, vec![(0, 2.0)]);
    }

    #[test]
    fn two_term_posynomial_becomes_lse() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 10.0);
        b.minimize(x).le(
            "c",
            Monomial::var(x) + Monomial::var(x).recip(),
            Monomial::constant(2.0),
        );
        let cp = log_transform(&b.build().unwrap());
        assert_eq!(cp.inequalities[0].terms.len(), 2);
        // x = 1 sits exactly on the boundary
        assert!(cp.inequalities[0].eval(&[0.0]).abs() < 1e-15);
        assert_eq!(cp.upper[0], 10f64.ln());
    }

    #[test]
    fn lse_is_overflow_safe() {
        assert!((lse(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    fn arb_monomial() -> impl Strategy<Value = Monomial> {
        (0.01f64..100.0, prop::collection::vec((0usize..3, -3.0f64..3.0), 0..4))
            .prop_map(|(c, e)| Monomial::new(c, e.into_iter().map(|(v, a)| (VarId(v), a))))
    }

    proptest! {
        #[test]
        fn lse_constraints_are_convex(
            terms in prop::collection::vec(arb_monomial(), 1..5),
            y1 in prop::collection::vec(-3.0f64..3.0, 3),
            y2 in prop::collection::vec(-3.0f64..3.0, 3),
            lam in 0.01f64..0.99,
        ) {
            let f = LogSumExp::from_posynomial(&Posynomial::new(terms));
            let mid: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
            prop_assert!(f.eval(&mid) <= lam * f.eval(&y1) + (1.0 - lam) * f.eval(&y2) + 1e-10);
        }

        #[test]
        fn monomial_round_trip(m in arb_monomial(), x in prop::collection::vec(0.1f64..10.0, 3)) {
            let y: Vec<f64> = x.iter().map(|v| v.ln()).collect();
            let direct = m.eval(&x);
            let via = AffineForm::from_monomial(&m).eval(&y).exp();
            prop_assert!((direct - via).abs() <= 1e-12 * direct.abs().max(1e-300));
        }

        #[test]
        fn term_order_does_not_change_program(terms in prop::collection::vec(arb_monomial(), 1..5), seed in 0u64..1000) {
            let mut shuffled = terms.clone();
            let len = shuffled.len();
            shuffled.rotate_left((seed as usize) % len);
            shuffled.reverse();
            let a = LogSumExp::from_posynomial(&Posynomial::new(terms));
            let b = LogSumExp::from_posynomial(&Posynomial::new(shuffled));
            prop_assert_eq!(a, b);
        }
    }
}
