//! Mixed-integer geometric programming for electric powertrain design.
//!
//! Drive cycles are turned into weighted wheel-side load scenarios, motor and
//! transmission are sized with a geometric program solved by a barrier
//! method, and the discrete gear assignment of a two-speed gearbox is
//! searched by brute force, Benders decomposition or an iterative heuristic.

pub mod cycle;
pub mod error;
pub mod gp;
pub mod migp;
pub mod powertrain;
pub mod solve;

pub use error::{Error, Result};
pub use gp::{GpModel, GpModelBuilder, Monomial, Posynomial, VarId};
pub use solve::{
    kkt_residuals, sensitivities, solve, solve_model, GpSolution, KktResiduals, SolveStatus, SolverOptions,
};
