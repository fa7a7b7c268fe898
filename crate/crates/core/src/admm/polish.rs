use std::time::Instant;

use nalgebra::DVector;

use super::{ConvexOptions, ConvexSolver, FixedReduction, Settings, Solution};
use crate::error::{Error, Result};
use crate::model::Problem;
use crate::projection::project;

/// Freezes every nonconvex coordinate at its value in `x` and solves the
/// remaining convex problem. The refined point replaces `x` only if its
/// residual is within `eps_tol` and it lowers the objective (or `x` itself
/// was not within `eps_tol`).
pub fn polish(problem: &Problem, x: &DVector<f64>, eps_tol: f64) -> DVector<f64> {
    try_polish(problem, x, eps_tol).unwrap_or_else(|| x.clone())
}

fn try_polish(problem: &Problem, x: &DVector<f64>, eps_tol: f64) -> Option<DVector<f64>> {
    let fixed: Vec<usize> = (0..problem.n())
        .filter(|&i| !problem.sets[i].is_convex())
        .collect();
    if fixed.len() == problem.n() || x.len() != problem.n() {
        return None;
    }
    let reduction = FixedReduction::new(problem, &fixed);
    let values = DVector::from_iterator(fixed.len(), fixed.iter().map(|&i| x[i]));
    let reduced = reduction.reduce(problem, &values);
    let solver = ConvexSolver::new(
        &reduced,
        ConvexOptions {
            tol: 1e-8,
            max_iter: 5000,
            ..ConvexOptions::default()
        },
    )
    .ok()?;
    let x0 = DVector::from_iterator(reduction.free.len(), reduction.free.iter().map(|&i| x[i]));
    let out = solver.solve(&reduced, Some(&x0)).ok()?;
    let candidate = reduction.expand(&out.x, &values);

    let residual = problem.residual(&candidate).ok()?;
    if residual > eps_tol || problem.membership_distance(&candidate).ok()? > 0.0 {
        return None;
    }
    let before_ok = problem.residual(x).ok()? <= eps_tol;
    let improves = problem.objective(&candidate).ok()? < problem.objective(x).ok()?;
    (improves || !before_ok).then_some(candidate)
}

/// Solves the convex-hull relaxation and projects the result onto `X`. The
/// rounded point is reported even when it violates `Ax = b`.
pub fn relax_and_round(problem: &Problem, settings: &Settings) -> Result<Solution> {
    let start = Instant::now();
    settings.validate()?;
    problem.validate().map_err(Error::InvalidProblem)?;
    let mut hull = problem.clone();
    hull.sets = problem.sets.iter().map(|s| s.hull()).collect();

    let mut solution = Solution::empty();
    solution.stats.restarts = 1;
    let solver = ConvexSolver::new(
        &hull,
        ConvexOptions {
            rho: settings.rho,
            tol: 1e-7,
            max_iter: 20_000,
            ..ConvexOptions::default()
        },
    );
    solution.stats.setup_time = start.elapsed();
    solution.stats.factorizations = 1;
    let relaxed = match solver.and_then(|s| s.solve(&hull, None)) {
        Ok(out) => {
            solution.stats.iterations = out.iterations;
            out.x
        }
        Err(_) => {
            solution.stats.failed_restarts = 1;
            solution.stats.wall_time = start.elapsed();
            return Ok(solution);
        }
    };
    let x = project(&problem.sets, &relaxed)?;
    solution.best_objective = problem.objective(&x)?;
    solution.best_residual = problem.residual(&x)?;
    solution.found_feasible = solution.best_residual <= settings.eps_tol;
    solution.best_x = Some(x);
    solution.stats.wall_time = start.elapsed();
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::solve_equality_qp;
    use crate::model::ConstraintSet;
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn mixed() -> Problem {
        Problem::new(
            dmatrix![3.0, 0.5, 0.2; 0.5, 2.0, 0.1; 0.2, 0.1, 1.0],
            dvector![-1.0, 0.5, -0.3],
            0.0,
            dmatrix![1.0, 1.0, 1.0],
            dvector![1.2],
            vec![ConstraintSet::binary(), ConstraintSet::Reals, ConstraintSet::Reals],
        )
    }

    #[test]
    fn all_nonconvex_is_untouched() {
        let p = Problem::unconstrained(DMatrix::identity(2, 2), dvector![0.3, 0.1], 0.0, vec![ConstraintSet::binary(); 2]);
        let x = dvector![1.0, 0.0];
        assert_eq!(polish(&p, &x, 1e-4), x);
    }

    #[test]
    fn recovers_conditional_optimum() {
        let p = mixed();
        // conditional optimum with x0 = 1 by direct KKT on the free part
        let red = FixedReduction::new(&p, &[0]);
        let rp = red.reduce(&p, &dvector![1.0]);
        let xf = solve_equality_qp(&rp.p, &rp.q, &rp.a, &rp.b).unwrap();
        let expected = red.expand(&xf, &dvector![1.0]);

        let mut start = expected.clone();
        start[1] += 0.1;
        start[2] -= 0.1;
        let out = polish(&p, &start, 1e-4);
        assert!((&out - &expected).amax() < 1e-9);
        assert!(p.objective(&out).unwrap() < p.objective(&start).unwrap());
    }

    #[test]
    fn convex_problem_is_solved_fully() {
        let mut p = mixed();
        p.sets[0] = ConstraintSet::Reals;
        let direct = solve_equality_qp(&p.p, &p.q, &p.a, &p.b).unwrap();
        let out = polish(&p, &dvector![0.0, 0.6, 0.6], 1e-4);
        assert!((out - direct).amax() < 1e-9);
    }

    #[test]
    fn relax_and_round_on_convex_problem() {
        let mut p = mixed();
        p.sets[0] = ConstraintSet::interval(-5.0, 5.0);
        let direct = solve_equality_qp(&p.p, &p.q, &p.a, &p.b).unwrap();
        let sol = relax_and_round(&p, &Settings::default()).unwrap();
        assert!(sol.found_feasible);
        assert!((sol.best_x.unwrap() - direct).amax() < 1e-6);
    }

    #[test]
    fn relax_and_round_reports_infeasible_rounding() {
        // x1 + x2 = 1 over binaries with a symmetric objective: the relaxation
        // sits at (0.5, 0.5), which rounds to (0, 0).
        let p = Problem::new(
            DMatrix::identity(2, 2),
            dvector![0.0, 0.0],
            0.0,
            dmatrix![1.0, 1.0],
            dvector![1.0],
            vec![ConstraintSet::binary(); 2],
        );
        let sol = relax_and_round(&p, &Settings::default()).unwrap();
        assert_eq!(sol.best_x.unwrap(), dvector![0.0, 0.0]);
        assert!(!sol.found_feasible);
        assert!((sol.best_residual - 1.0).abs() < 1e-12);
    }
}
