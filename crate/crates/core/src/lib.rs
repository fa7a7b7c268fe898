//! Nonconvex ADMM heuristic for quadratic programs over nonconvex sets:
//!
//! ```text
//! minimize   (1/2) x'Px + q'x + r
//! subject to Ax = b,  x in X_1 x ... x X_n
//! ```
//!
//! Each `X_i` is one of the reals, the nonnegative reals, an interval, a finite
//! set, or an integer range. The heuristic runs scaled ADMM from several random
//! starting points and keeps the best feasible projected iterate.

pub mod admm;
pub mod error;
pub mod generators;
pub mod kkt;
pub mod model;
pub mod oracle;
pub mod precondition;
pub mod projection;

pub use admm::{
    polish, relax_and_round, solve, ConvexOptions, ConvexOutcome, ConvexSolver, DualUpdate,
    Preset, Settings, Solution, SolveStats, Solver, TraceRow,
};
pub use error::{Error, Result};
pub use model::{ConstraintSet, Problem, Violation};
pub use oracle::{enumerate_solve, optimality_gap, relative_gap, OracleOutcome};
pub use precondition::{PreconditionMode, Scaling};
pub use projection::{project, project_coord};
