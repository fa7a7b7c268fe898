use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid problem: {}", format_violations(.0))]
    InvalidProblem(Vec<Violation>),

    #[error("rho must be positive and finite, got {0}")]
    NonPositiveRho(f64),

    #[error("numerically singular KKT matrix: pivot {index} is {pivot:e}")]
    SingularKkt { index: usize, pivot: f64 },

    #[error("inconsistent equality constraints: refined KKT residual {residual:e}")]
    InconsistentConstraints { residual: f64 },

    #[error("iterate diverged to non-finite values")]
    Diverged,

    #[error("factorization fingerprint does not match the problem data")]
    StaleFactorization,

    #[error("{combinations} discrete assignments exceed the cap of {cap}")]
    CapExceeded { combinations: u128, cap: u64 },

    #[error("coordinate {index} has an unbounded or continuous nonconvex set")]
    UnsupportedSet { index: usize },

    #[error("no feasible point: {0}")]
    Infeasible(&'static str),

    #[error("heuristic objective {heuristic} beats the global optimum {optimum}")]
    BeatsOracle { heuristic: f64, optimum: f64 },

    #[error("value {value} at position {index} is not a constellation point")]
    NotInConstellation { index: usize, value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid settings: {0}")]
    InvalidSettings(String),

    #[error("malformed problem JSON: {0}")]
    Json(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
