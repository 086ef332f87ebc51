//! Convex quadratic programming: problem assembly, a sparse operator-splitting
//! solver, and KKT certificates.

mod admm;
mod kkt;
mod ldl;
mod problem;
pub mod sparse;

pub use admm::{solve_qp, QpSettings, QpSolution, QpSolver, QpStatus};
pub use kkt::{dual_objective, kkt_residuals, KktResiduals};
pub use ldl::{Ldl, LdlError};
pub use problem::{QpBuilder, QpProblem};
pub use sparse::CscMatrix;
