//! Command-line front end for the `ncadmm` heuristic: solve problem files,
//! generate example instances and run the benchmark suites.

pub mod bench;
mod commands;
mod report;

pub use commands::{run, Cli, Command};
pub use report::{SolutionReport, Status};

/// Exit code for a run that found a feasible point.
pub const EXIT_OK: i32 = 0;
/// Exit code for usage and input errors.
pub const EXIT_ERROR: i32 = 1;
/// Exit code when no feasible point was found.
pub const EXIT_NO_FEASIBLE: i32 = 2;
