//! Monomials and posynomials over positive variables.
//!
//! Exponent maps are kept sorted by variable id with zero exponents dropped,
//! so two monomials that are equal as functions compare equal structurally.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul};

use serde::{Deserialize, Serialize};

/// Index of a declared model variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// `coefficient · Π x_i^{a_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    coefficient: f64,
    exponents: BTreeMap<VarId, f64>,
}

impl Monomial {
    pub fn constant(coefficient: f64) -> Self {
        Monomial {
            coefficient,
            exponents: BTreeMap::new(),
        }
    }

    /// The monomial `x`.
    pub fn var(id: VarId) -> Self {
        Monomial::constant(1.0).times_var(id, 1.0)
    }

    pub fn new<I>(coefficient: f64, exponents: I) -> Self
    where
        I: IntoIterator<Item = (VarId, f64)>,
    {
        exponents
            .into_iter()
            .fold(Monomial::constant(coefficient), |m, (v, a)| m.times_var(v, a))
    }

    /// Multiply in `x^a`.
    pub fn times_var(mut self, id: VarId, a: f64) -> Self {
        let e = self.exponents.entry(id).or_insert(0.0);
        *e += a;
        if *e == 0.0 {
            self.exponents.remove(&id);
        }
        self
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn exponents(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.exponents.iter().map(|(v, a)| (*v, *a))
    }

    pub fn exponent(&self, id: VarId) -> f64 {
        self.exponents.get(&id).copied().unwrap_or(0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn scale(mut self, c: f64) -> Self {
        self.coefficient *= c;
        self
    }

    pub fn pow(&self, p: f64) -> Self {
        let mut out = Monomial::constant(self.coefficient.powf(p));
        for (v, a) in self.exponents() {
            out = out.times_var(v, a * p);
        }
        out
    }

    pub fn recip(&self) -> Self {
        self.pow(-1.0)
    }

    /// Evaluate at `x`, indexed by variable id.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .fold(self.coefficient, |acc, (v, a)| acc * x[v.0].powf(*a))
    }

    /// `log α0 + Σ a_i y_i` at `y = log x`.
    pub fn eval_log(&self, y: &[f64]) -> f64 {
        self.exponents
            .iter()
            .fold(self.coefficient.ln(), |acc, (v, a)| acc + a * y[v.0])
    }

    fn cmp_canonical(&self, other: &Self) -> Ordering {
        let a = self.exponents.iter();
        let b = other.exponents.iter();
        for ((va, ea), (vb, eb)) in a.zip(b) {
            let o = va.cmp(vb).then(ea.total_cmp(eb));
            if o != Ordering::Equal {
                return o;
            }
        }
        self.exponents
            .len()
            .cmp(&other.exponents.len())
            .then(self.coefficient.total_cmp(&other.coefficient))
    }
}

impl Mul for Monomial {
    type Output = Monomial;
    fn mul(self, rhs: Monomial) -> Monomial {
        let mut out = self.scale(rhs.coefficient);
        for (v, a) in rhs.exponents {
            out = out.times_var(v, a);
        }
        out
    }
}

impl Mul<f64> for Monomial {
    type Output = Monomial;
    fn mul(self, rhs: f64) -> Monomial {
        self.scale(rhs)
    }
}

impl Div for Monomial {
    type Output = Monomial;
    fn div(self, rhs: Monomial) -> Monomial {
        self * rhs.recip()
    }
}

impl Div<f64> for Monomial {
    type Output = Monomial;
    fn div(self, rhs: f64) -> Monomial {
        self.scale(1.0 / rhs)
    }
}

impl From<VarId> for Monomial {
    fn from(v: VarId) -> Self {
        Monomial::var(v)
    }
}

/// A sum of monomials, kept in canonical term order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posynomial {
    terms: Vec<Monomial>,
}

impl Posynomial {
    /// Terms with identical exponent maps are merged; the result is sorted by
    /// exponent sequence, then coefficient.
    pub fn new(terms: Vec<Monomial>) -> Self {
        let mut merged: Vec<Monomial> = Vec::with_capacity(terms.len());
        let mut terms = terms;
        terms.sort_by(|a, b| a.cmp_canonical(b));
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.exponents == t.exponents => last.coefficient += t.coefficient,
                _ => merged.push(t),
            }
        }
        Posynomial { terms: merged }
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_monomial(&self) -> Option<&Monomial> {
        match self.terms.as_slice() {
            [m] => Some(m),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|m| m.eval(x)).sum()
    }

    /// Divide every term by a monomial.
    pub fn div_monomial(&self, m: &Monomial) -> Self {
        let r = m.recip();
        Posynomial::new(self.terms.iter().map(|t| t.clone() * r.clone()).collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        Posynomial {
            terms: self.terms.iter().map(|t| t.clone().scale(c)).collect(),
        }
    }

    pub fn variables(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.iter().flat_map(|t| t.exponents.keys().copied())
    }
}

impl From<Monomial> for Posynomial {
    fn from(m: Monomial) -> Self {
        Posynomial { terms: vec![m] }
    }
}

impl From<VarId> for Posynomial {
    fn from(v: VarId) -> Self {
        Monomial::var(v).into()
    }
}

impl Add for Monomial {
    type Output = Posynomial;
    fn add(self, rhs: Monomial) -> Posynomial {
        Posynomial::new(vec![self, rhs])
    }
}

impl Add<Monomial> for Posynomial {
    type Output = Posynomial;
    fn add(self, rhs: Monomial) -> Posynomial {
        let mut terms = self.terms;
        terms.push(rhs);
        Posynomial::new(terms)
    }
}

impl Add for Posynomial {
    type Output = Posynomial;
    fn add(self, rhs: Posynomial) -> Posynomial {
        let mut terms = self.terms;
        terms.extend(rhs.terms);
        Posynomial::new(terms)
    }
}

impl Mul<Monomial> for Posynomial {
    type Output = Posynomial;
    fn mul(self, rhs: Monomial) -> Posynomial {
        Posynomial::new(self.terms.into_iter().map(|t| t * rhs.clone()).collect())
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.coefficient)?;
        for (v, a) in &self.exponents {
            if *a == 1.0 {
                write!(f, "·x{}", v.0)?;
            } else {
                write!(f, "·x{}^{}", v.0, a)?;
            }
        }
        Ok(())
    }
}
