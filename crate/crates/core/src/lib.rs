//! Equality-constrained minimization `min f(x) s.t. h(x) = 0` by an
//! unconstrained descent iteration on an extended system that makes the
//! constraint manifold invariant and attractive.
//!
//! ```
//! use manifold_descent::{problems, solve, SolverConfig, Termination};
//! use nalgebra::dvector;
//!
//! let sphere = problems::builtin("sphere").unwrap();
//! let report = solve(&sphere, &dvector![0.0, 0.0, 2.0], &SolverConfig::default()).unwrap();
//! assert_eq!(report.termination, Termination::Converged);
//! ```

pub mod config;
pub mod descent;
pub mod error;
pub mod escape;
pub mod fd;
pub mod flows;
pub mod geometry;
pub mod problem;
pub mod problems;

pub use config::{SolverConfig, StepRule};
pub use descent::{solve, IterateRecord, SolveReport, StepKind, Termination};
pub use error::{Error, Result};
pub use escape::{classify, solve_with_escape, Classification, SecondOrderReport};
pub use flows::{integrate, FlowKind, FlowSpec, FlowTrace};
pub use geometry::{GeometryEval, KktResidual};
pub use problem::Problem;
