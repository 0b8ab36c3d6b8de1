//! Human-readable listing of a model, one line per item.

use std::fmt::Write;

use super::expr::{Monomial, Posynomial};
use super::model::{ConstraintKind, GpModel};

fn fmt_monomial(m: &Monomial, model: &GpModel) -> String {
    let mut s = format!("{:.12e}", m.coefficient());
    for (v, a) in m.exponents() {
        let name = &model.variables()[v.0].name;
        if a == 1.0 {
            let _ = write!(s, " * {name}");
        } else {
            let _ = write!(s, " * {name}^{a}");
        }
    }
    s
}

fn fmt_posynomial(p: &Posynomial, model: &GpModel) -> String {
    p.terms()
        .iter()
        .map(|t| fmt_monomial(t, model))
        .collect::<Vec<_>>()
        .join(" + ")
}

pub fn dump_model(model: &GpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "minimize {}", fmt_posynomial(model.objective(), model));
    out.push_str("variables\n");
    for v in model.variables() {
        let _ = writeln!(out, "  {} in [{:e}, {:e}]", v.name, v.lower, v.upper);
    }
    out.push_str("subject to\n");
    for c in model.constraints() {
        match &c.kind {
            ConstraintKind::Le(p) => {
                let _ = writeln!(out, "  [{}] {} <= 1", c.label, fmt_posynomial(p, model));
            }
            ConstraintKind::Eq(m) => {
                let _ = writeln!(out, "  [{}] {} == 1", c.label, fmt_monomial(m, model));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::model::GpModelBuilder;

    #[test]
    fn golden_small_model() {
        let mut b = GpModelBuilder::new();
        let x = b.var("x", 0.1, 10.0);
        let y = b.var("y", 1.0, f64::INFINITY);
        b.minimize(Monomial::var(x) + Monomial::var(y))
            .le(
                "prod",
                Monomial::var(x).recip() * Monomial::var(y).recip(),
                Monomial::constant(1.0),
            )
            .eq("link", x, Monomial::new(2.0, [(y, 1.0)]));
        let text = dump_model(&b.build().unwrap());
        let expected = "\
minimize 1.000000000000e0 * x + 1.000000000000e0 * y
variables
  x in [1e-1, 1e1]
  y in [1e0, inf]
subject to
  [prod] 1.000000000000e0 * x^-1 * y^-1 <= 1
  [link] 5.000000000000e-1 * x * y^-1 == 1
";
        assert_eq!(text, expected);
    }
}
