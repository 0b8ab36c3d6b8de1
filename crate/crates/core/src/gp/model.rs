//! Validated geometric programs in `≤ 1` / `= 1` normal form.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::expr::{Monomial, Posynomial, VarId};
use crate::error::{Error, Result};

/// A declared positive variable with a box `[lower, upper]`.
///
/// `group` tags variables that belong to one scenario; the solver uses it to
/// exploit block structure. Ungrouped variables are treated as global.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub group: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// A constraint as written, `lhs (≤|≥|=) rhs`, before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConstraint {
    pub label: String,
    pub lhs: Posynomial,
    pub sense: Sense,
    pub rhs: Posynomial,
}

impl RawConstraint {
    pub fn le(label: impl Into<String>, lhs: impl Into<Posynomial>, rhs: impl Into<Posynomial>) -> Self {
        Self::new(label, lhs, Sense::Le, rhs)
    }

    pub fn ge(label: impl Into<String>, lhs: impl Into<Posynomial>, rhs: impl Into<Posynomial>) -> Self {
        Self::new(label, lhs, Sense::Ge, rhs)
    }

    pub fn eq(label: impl Into<String>, lhs: impl Into<Posynomial>, rhs: impl Into<Posynomial>) -> Self {
        Self::new(label, lhs, Sense::Eq, rhs)
    }

    fn new(label: impl Into<String>, lhs: impl Into<Posynomial>, sense: Sense, rhs: impl Into<Posynomial>) -> Self {
        RawConstraint {
            label: label.into(),
            lhs: lhs.into(),
            sense,
            rhs: rhs.into(),
        }
    }
}

/// Normalized constraint body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// `p(x) ≤ 1`
    Le(Posynomial),
    /// `m(x) = 1`
    Eq(Monomial),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub label: String,
    pub kind: ConstraintKind,
}

/// Minimize a posynomial subject to normalized constraints and variable boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    variables: Vec<Variable>,
    objective: Posynomial,
    constraints: Vec<Constraint>,
    #[serde(skip)]
    label_index: HashMap<String, usize>,
}

impl GpModel {
    /// Validate and normalize a model.
    ///
    /// `lhs ≤ rhs` and `lhs ≥ rhs` need a monomial on the side that is
    /// divided out; equalities need monomials on both sides.
    pub fn new(variables: Vec<Variable>, objective: Posynomial, constraints: Vec<RawConstraint>) -> Result<Self> {
        let mut names = HashSet::new();
        for v in &variables {
            if !(v.lower > 0.0 && v.lower.is_finite()) {
                return Err(Error::Model(format!(
                    "variable `{}` needs a finite lower bound > 0",
                    v.name
                )));
            }
            if v.upper.is_nan() || v.upper < v.lower {
                return Err(Error::Model(format!(
                    "variable `{}` has upper bound below lower bound",
                    v.name
                )));
            }
            if !names.insert(v.name.as_str()) {
                return Err(Error::Model(format!("duplicate variable name `{}`", v.name)));
            }
        }
        let n = variables.len();
        if objective.is_empty() {
            return Err(Error::Model("empty objective".into()));
        }
        check_posynomial(&objective, n, "objective")?;

        let mut out = Vec::with_capacity(constraints.len());
        let mut label_index = HashMap::new();
        for c in constraints {
            if c.lhs.is_empty() || c.rhs.is_empty() {
                return Err(Error::Model(format!("constraint `{}` has an empty side", c.label)));
            }
            check_posynomial(&c.lhs, n, &c.label)?;
            check_posynomial(&c.rhs, n, &c.label)?;
            let kind = match c.sense {
                Sense::Le => {
                    let rhs = c.rhs.as_monomial().ok_or_else(|| {
                        Error::Model(format!(
                            "constraint `{}`: right-hand side of ≤ must be a monomial",
                            c.label
                        ))
                    })?;
                    ConstraintKind::Le(c.lhs.div_monomial(rhs))
                }
                Sense::Ge => {
                    let lhs = c.lhs.as_monomial().ok_or_else(|| {
                        Error::Model(format!(
                            "constraint `{}`: left-hand side of ≥ must be a monomial",
                            c.label
                        ))
                    })?;
                    ConstraintKind::Le(c.rhs.div_monomial(lhs))
                }
                Sense::Eq => match (c.lhs.as_monomial(), c.rhs.as_monomial()) {
                    (Some(l), Some(r)) => ConstraintKind::Eq(l.clone() / r.clone()),
                    _ => {
                        return Err(Error::Model(format!(
                            "constraint `{}`: posynomial equality is not allowed",
                            c.label
                        )))
                    }
                },
            };
            if label_index.insert(c.label.clone(), out.len()).is_some() {
                return Err(Error::Model(format!("duplicate constraint label `{}`", c.label)));
            }
            out.push(Constraint { label: c.label, kind });
        }
        Ok(GpModel {
            variables,
            objective,
            constraints: out,
            label_index,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn objective(&self) -> &Posynomial {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_equalities(&self) -> usize {
        self.constraints
            .iter()
            .filter(|c| matches!(c.kind, ConstraintKind::Eq(_)))
            .count()
    }

    pub fn num_inequalities(&self) -> usize {
        self.constraints.len() - self.num_equalities()
    }

    /// Finite variable bounds, each side counted once.
    pub fn num_finite_bounds(&self) -> usize {
        self.variables
            .iter()
            .map(|v| 1 + usize::from(v.upper.is_finite()))
            .sum()
    }

    /// Equalities + inequalities + finite bounds.
    pub fn num_constraints_total(&self) -> usize {
        self.constraints.len() + self.num_finite_bounds()
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn constraint_index(&self, label: &str) -> Option<usize> {
        if self.label_index.is_empty() && !self.constraints.is_empty() {
            return self.constraints.iter().position(|c| c.label == label);
        }
        self.label_index.get(label).copied()
    }

    /// Copy with the left-hand side of each matching `≤ 1` constraint
    /// multiplied by `factor`.
    pub fn with_scaled_inequalities<F>(&self, mut matches: F, factor: f64) -> Self
    where
        F: FnMut(&str) -> bool,
    {
        let mut out = self.clone();
        for c in &mut out.constraints {
            if let ConstraintKind::Le(p) = &c.kind {
                if matches(&c.label) {
                    c.kind = ConstraintKind::Le(p.scale(factor));
                }
            }
        }
        out
    }

    pub fn with_scaled_objective(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.objective = out.objective.scale(factor);
        out
    }
}

fn check_posynomial(p: &Posynomial, n: usize, label: &str) -> Result<()> {
    for t in p.terms() {
        let c = t.coefficient();
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Model(format!(
                "`{label}`: coefficient {c} is not positive and finite"
            )));
        }
        for (v, a) in t.exponents() {
            if v.0 >= n {
                return Err(Error::Model(format!("`{label}`: undeclared variable x{}", v.0)));
            }
            if !a.is_finite() {
                return Err(Error::Model(format!("`{label}`: non-finite exponent")));
            }
        }
    }
    Ok(())
}

/// Incremental model construction.
#[derive(Debug, Default, Clone)]
pub struct GpModelBuilder {
    variables: Vec<Variable>,
    objective: Option<Posynomial>,
    constraints: Vec<RawConstraint>,
}

impl GpModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.push_var(name.into(), lower, upper, None)
    }

    pub fn local_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, group: usize) -> VarId {
        self.push_var(name.into(), lower, upper, Some(group))
    }

    fn push_var(&mut self, name: String, lower: f64, upper: f64, group: Option<usize>) -> VarId {
        self.variables.push(Variable {
            name,
            lower,
            upper,
            group,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn minimize(&mut self, objective: impl Into<Posynomial>) -> &mut Self {
        self.objective = Some(objective.into());
        self
    }

    pub fn le(
        &mut self,
        label: impl Into<String>,
        lhs: impl Into<Posynomial>,
        rhs: impl Into<Posynomial>,
    ) -> &mut Self {
        self.constraints.push(RawConstraint::le(label, lhs, rhs));
        self
    }

    pub fn ge(
        &mut self,
        label: impl Into<String>,
        lhs: impl Into<Posynomial>,
        rhs: impl Into<Posynomial>,
    ) -> &mut Self {
        self.constraints.push(RawConstraint::ge(label, lhs, rhs));
        self
    }

    pub fn eq(
        &mut self,
        label: impl Into<String>,
        lhs: impl Into<Posynomial>,
        rhs: impl Into<Posynomial>,
    ) -> &mut Self {
        self.constraints.push(RawConstraint::eq(label, lhs, rhs));
        self
    }

    pub fn build(self) -> Result<GpModel> {
        let objective = self.objective.ok_or_else(|| Error::Model("no objective set".into()))?;
        GpModel::new(self.variables, objective, self.constraints)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_gp_is_valid() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 10.0);
        b.minimize(x)
            .le("lb", Monomial::var(x).recip(), Monomial::constant(1.0));
        let m = b.build().unwrap();
        assert_eq!(m.num_variables(), 1);
        assert_eq!(m.num_inequalities(), 1);
    }

    #[test]
    fn posynomial_equality_rejected_with_label() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 10.0);
        let y = b.var("y", 0.1, 10.0);
        b.minimize(x)
            .eq("sum", Monomial::var(x) + Monomial::var(y), Monomial::constant(1.0));
        let err = b.build().unwrap_err().to_string();
        assert!(err.contains("sum") && err.contains("posynomial equality"), "{err}");
    }

    #[test]
    fn negative_coefficient_rejected() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 10.0);
        b.minimize(x)
            .le("neg", Monomial::new(-2.0, [(x, 1.0)]), Monomial::constant(1.0));
        assert!(b.build().is_err());
    }

    #[test]
    fn undeclared_variable_rejected() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 10.0);
        b.minimize(x)
            .le("bad", Monomial::var(VarId(7)), Monomial::constant(1.0));
        assert!(b.build().unwrap_err().to_string().contains("undeclared"));
    }

    #[test]
    fn ge_normalizes_to_le() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 10.0);
        b.minimize(x).ge("x>=3", x, Monomial::constant(3.0));
        let m = b.build().unwrap();
        match &m.constraints()[0].kind {
            ConstraintKind::Le(p) => assert_eq!(p, &Posynomial::from(Monomial::new(3.0, [(x, -1.0)]))),
            _ => panic!(),
        }
    }

    #[test]
    fn bad_bounds_rejected() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.0, 10.0);
        b.minimize(x);
        assert!(b.build().is_err());
    }
}
