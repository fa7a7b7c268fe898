//! Global optimum by enumeration of every discrete assignment, each followed
//! by an exact convex solve of the remaining coordinates.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::admm::{ConvexOptions, ConvexSolver, FixedReduction};
use crate::error::{Error, Result};
use crate::model::Problem;

pub const DEFAULT_COMBINATION_CAP: u64 = 1 << 16;
/// Residual above which a convex subproblem counts as infeasible.
pub const SUBPROBLEM_FEASIBILITY_TOL: f64 = 1e-7;
/// Largest heuristic-below-oracle gap tolerated before the pair is rejected.
pub const GAP_CONTRACT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Optimal { x: DVector<f64>, objective: f64 },
    Infeasible,
}

impl OracleOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            OracleOutcome::Optimal { objective, .. } => Some(*objective),
            OracleOutcome::Infeasible => None,
        }
    }

    pub fn x(&self) -> Option<&DVector<f64>> {
        match self {
            OracleOutcome::Optimal { x, .. } => Some(x),
            OracleOutcome::Infeasible => None,
        }
    }
}

fn subproblem_options() -> ConvexOptions {
    ConvexOptions {
        rho: 1.0,
        tol: 1e-9,
        max_iter: 20_000,
        refine_every: 25,
    }
}

/// Ties between assignments go to the first in lexicographic order, with the
/// last discrete coordinate varying fastest.
pub fn enumerate_solve(problem: &Problem, combination_cap: u64) -> Result<OracleOutcome> {
    problem.validate().map_err(Error::InvalidProblem)?;
    let discrete: Vec<usize> = (0..problem.n())
        .filter(|&i| problem.sets[i].is_discrete())
        .collect();
    let radices: Vec<u128> = discrete
        .iter()
        .map(|&i| problem.sets[i].cardinality().expect("discrete set"))
        .collect();
    let combinations = radices
        .iter()
        .try_fold(1u128, |acc, &r| acc.checked_mul(r))
        .unwrap_or(u128::MAX);
    if combinations > combination_cap as u128 {
        return Err(Error::CapExceeded {
            combinations,
            cap: combination_cap,
        });
    }

    let reduction = FixedReduction::new(problem, &discrete);
    let values_of = |index: u128| -> DVector<f64> {
        let mut digits = vec![0u128; discrete.len()];
        let mut rest = index;
        for k in (0..discrete.len()).rev() {
            digits[k] = rest % radices[k];
            rest /= radices[k];
        }
        DVector::from_iterator(
            discrete.len(),
            discrete
                .iter()
                .zip(&digits)
                .map(|(&i, &d)| problem.sets[i].element(d).expect("digit in range")),
        )
    };
    let template = reduction.reduce(problem, &values_of(0));
    let solver = if reduction.free.is_empty() {
        None
    } else {
        Some(ConvexSolver::new(&template, subproblem_options())?)
    };

    let evaluate = |index: u128| -> Option<(f64, DVector<f64>)> {
        let values = values_of(index);
        let x = match &solver {
            None => values,
            Some(s) => {
                let reduced = reduction.reduce(problem, &values);
                let out = s.solve(&reduced, None).ok()?;
                reduction.expand(&out.x, &values)
            }
        };
        let residual = problem.residual(&x).ok()?;
        if residual.is_nan() || residual > SUBPROBLEM_FEASIBILITY_TOL {
            return None;
        }
        Some((problem.objective(&x).ok()?, x))
    };

    let objectives: Vec<Option<f64>> = (0..combinations as u64)
        .into_par_iter()
        .map(|k| evaluate(k as u128).map(|(f, _)| f))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (k, f) in objectives.iter().enumerate() {
        if let Some(f) = *f {
            if best.is_none_or(|(_, b)| f < b) {
                best = Some((k, f));
            }
        }
    }
    Ok(match best {
        None => OracleOutcome::Infeasible,
        Some((k, _)) => {
            let (objective, x) = evaluate(k as u128).expect("recomputed assignment is feasible");
            OracleOutcome::Optimal { x, objective }
        }
    })
}

/// `(f_heur - f_star) / max(1, |f_star|)`.
pub fn relative_gap(f_heuristic: f64, f_star: f64) -> f64 {
    (f_heuristic - f_star) / f_star.abs().max(1.0)
}

/// Relative gap of a heuristic point against the oracle. Fails if either side
/// is infeasible or if the heuristic undercuts the optimum by more than
/// [`GAP_CONTRACT_TOL`].
pub fn optimality_gap(
    problem: &Problem,
    x_heuristic: &DVector<f64>,
    oracle: &OracleOutcome,
    eps_tol: f64,
) -> Result<f64> {
    let f_star = oracle
        .objective()
        .ok_or(Error::Infeasible("oracle found no feasible assignment"))?;
    if problem.residual(x_heuristic)? > eps_tol || problem.membership_distance(x_heuristic)? > 0.0 {
        return Err(Error::Infeasible("heuristic point is not feasible"));
    }
    let f_heur = problem.objective(x_heuristic)?;
    let gap = relative_gap(f_heur, f_star);
    if gap < -GAP_CONTRACT_TOL {
        return Err(Error::BeatsOracle {
            heuristic: f_heur,
            optimum: f_star,
        });
    }
    Ok(gap)
}
