use std::io::Write;

use ncadmm::{Solution, TraceRow};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Feasible,
    NoFeasiblePoint,
}

/// Solution JSON printed by `ncadmm solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub status: Status,
    pub objective: Option<f64>,
    pub residual: Option<f64>,
    pub x: Option<Vec<f64>>,
    pub restarts: usize,
    pub iterations: usize,
    pub factorizations: u64,
    /// Only present with `--timing`, so that default output is reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

impl SolutionReport {
    pub fn new(sol: &Solution, timing: bool) -> Self {
        let feasible = sol.found_feasible;
        SolutionReport {
            status: if feasible {
                Status::Feasible
            } else {
                Status::NoFeasiblePoint
            },
            objective: feasible.then_some(sol.best_objective),
            residual: feasible.then_some(sol.best_residual),
            x: sol.best_x.as_ref().map(|x| x.iter().copied().collect()),
            restarts: sol.stats.restarts,
            iterations: sol.stats.iterations,
            factorizations: sol.stats.factorizations,
            wall_ms: timing.then_some(sol.stats.wall_time.as_secs_f64() * 1e3),
        }
    }
}

pub fn write_trace<W: Write>(rows: &[TraceRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["restart", "k", "objective", "residual", "best_so_far"])?;
    for r in rows {
        w.write_record([
            r.restart.to_string(),
            r.k.to_string(),
            format!("{:?}", r.objective),
            format!("{:?}", r.residual),
            format!("{:?}", r.best_so_far),
        ])?;
    }
    w.flush()
}
