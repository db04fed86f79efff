//! Riemannian inexact variable-metric proximal linearization.
//!
//! Minimizes `Θ(x) = f(x) + ϑ(F(x))` over an embedded matrix manifold, where
//! `f` and `F` are smooth and `ϑ` is a convex function with a closed-form
//! proximal map. Each outer step solves a strongly convex model subproblem on
//! the tangent space inexactly, through its dual, and retracts.

pub mod linalg;
pub mod manifold;
pub mod problem;
pub mod prox;
pub mod random;
pub mod solver;
pub mod subsolver;
pub mod zpoint;

pub use linalg::Mat;
pub use manifold::ManifoldKind;
pub use problem::{CompositeProblem, ProblemError};
pub use prox::ProxRegularizer;
pub use solver::{run, RunResult, RunStatus, SolverConfig};
pub use zpoint::{ZPoint, ZShape};
