//! Geometric-program algebra, model validation and the log transform.

pub mod dump;
pub mod expr;
pub mod model;
pub mod transform;

pub use dump::dump_model;
pub use expr::{Monomial, Posynomial, VarId};
pub use model::{Constraint, ConstraintKind, GpModel, GpModelBuilder, RawConstraint, Sense, Variable};
pub use transform::{log_transform, AffineForm, ConvexProgram, LogSumExp};
