//! Convex problems (every set convex) solved to tight tolerance.
//!
//! All-`Reals` problems go straight to the equality-constrained KKT solve.
//! Otherwise the scaled iteration runs with the standard dual update; every few
//! iterations the bounds active at the projected iterate are frozen and the
//! remaining equality-constrained QP is solved exactly. If that point is
//! feasible and the bound multipliers have the right signs it is optimal and is
//! returned directly.

use nalgebra::{DMatrix, DVector};

use super::{iterate, AdmmContext, DualUpdate, IterState};
use crate::error::{Error, Result};
use crate::kkt::{EqualityQp, KktFactorization};
use crate::model::{ConstraintSet, Problem};
use crate::precondition::{compute_scaling, PreconditionMode, Scaling};
use crate::projection::project;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexOptions {
    pub rho: f64,
    /// Target `||Ax - b||_2`, also used for the iterate-change test.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations between active-set refinements.
    pub refine_every: usize,
}

impl Default for ConvexOptions {
    fn default() -> Self {
        ConvexOptions {
            rho: 1.0,
            tol: 1e-8,
            max_iter: 5000,
            refine_every: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexOutcome {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Whether `x` came from a verified active-set solve.
    pub exact: bool,
}

enum Method {
    Equality(EqualityQp),
    Admm {
        scaling: Scaling,
        fac: KktFactorization,
    },
}

/// Factorizations for a family of convex problems sharing `P`, `A` and the
/// constraint sets; only `q`, `b` and `r` may differ between solves.
pub struct ConvexSolver {
    opts: ConvexOptions,
    method: Method,
}

impl ConvexSolver {
    pub fn new(template: &Problem, opts: ConvexOptions) -> Result<Self> {
        if let Some(index) = template.sets.iter().position(|s| !s.is_convex()) {
            return Err(Error::UnsupportedSet { index });
        }
        let method = if template.sets.iter().all(|s| *s == ConstraintSet::Reals) {
            Method::Equality(EqualityQp::new(&template.p, &template.a)?)
        } else {
            let scaling = compute_scaling(template, PreconditionMode::RowL2);
            let fac = KktFactorization::build(&template.p, &template.a, &scaling, opts.rho)?;
            Method::Admm { scaling, fac }
        };
        Ok(ConvexSolver { opts, method })
    }

    pub fn solve(&self, problem: &Problem, x0: Option<&DVector<f64>>) -> Result<ConvexOutcome> {
        match &self.method {
            Method::Equality(eq) => {
                let x = eq.solve(&problem.q, &problem.b)?;
                let residual = problem.residual(&x)?;
                Ok(ConvexOutcome {
                    x,
                    residual,
                    iterations: 0,
                    exact: true,
                })
            }
            Method::Admm { scaling, fac } => self.run_admm(problem, scaling, fac, x0),
        }
    }

    fn run_admm(
        &self,
        problem: &Problem,
        scaling: &Scaling,
        fac: &KktFactorization,
        x0: Option<&DVector<f64>>,
    ) -> Result<ConvexOutcome> {
        let opts = &self.opts;
        let ctx = AdmmContext::trusted(problem, scaling, fac, opts.rho);
        let x0 = match x0 {
            Some(x) => project(&problem.sets, x)?,
            None => project(&problem.sets, &DVector::zeros(problem.n()))?,
        };
        let mut state = IterState::new(x0, problem.m());
        let mut last_pattern: Option<Vec<Bound>> = None;
        let mut residual = f64::INFINITY;
        for k in 1..=opts.max_iter {
            iterate(&mut state, &ctx, DualUpdate::Standard)?;
            residual = problem.residual(&state.x)?;
            let step = (&state.x - &state.prev).amax();
            let settled = residual <= opts.tol && step <= opts.tol * (1.0 + state.x.amax());
            if settled || k % opts.refine_every == 0 {
                let pattern = active_pattern(&problem.sets, &state.x);
                if last_pattern.as_ref() != Some(&pattern) {
                    if let Some(x) = refine(problem, &pattern, opts.tol) {
                        let residual = problem.residual(&x)?;
                        return Ok(ConvexOutcome {
                            x,
                            residual,
                            iterations: k,
                            exact: true,
                        });
                    }
                    last_pattern = Some(pattern);
                }
            }
            if settled {
                return Ok(ConvexOutcome {
                    x: state.x,
                    residual,
                    iterations: k,
                    exact: false,
                });
            }
        }
        Ok(ConvexOutcome {
            x: state.x,
            residual,
            iterations: opts.max_iter,
            exact: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
    Fixed,
}

fn active_pattern(sets: &[ConstraintSet], x: &DVector<f64>) -> Vec<Bound> {
    sets.iter()
        .zip(x.iter())
        .map(|(s, &v)| {
            let (lo, hi) = s.bounds();
            if lo == hi {
                Bound::Fixed
            } else if v == lo {
                Bound::Lower
            } else if v == hi {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect()
}

/// Exact solve with the coordinates in `pattern` held at their bounds; `None`
/// unless the result satisfies the optimality conditions.
fn refine(problem: &Problem, pattern: &[Bound], tol: f64) -> Option<DVector<f64>> {
    let fixed: Vec<usize> = (0..pattern.len())
        .filter(|&i| pattern[i] != Bound::Free)
        .collect();
    let values = DVector::from_iterator(
        fixed.len(),
        fixed.iter().map(|&i| {
            let (lo, hi) = problem.sets[i].bounds();
            if pattern[i] == Bound::Upper {
                hi
            } else {
                lo
            }
        }),
    );
    let (x, y) = if fixed.len() == problem.n() {
        // a vertex with equality rows would need a multiplier fit; skip it
        if problem.m() > 0 && pattern.iter().any(|b| *b != Bound::Fixed) {
            return None;
        }
        (values, DVector::zeros(0))
    } else {
        let reduction = FixedReduction::new(problem, &fixed);
        let reduced = reduction.reduce(problem, &values);
        let eq = EqualityQp::new(&reduced.p, &reduced.a).ok()?;
        let (x_free, y) = eq.solve_with_multipliers(&reduced.q, &reduced.b).ok()?;

        let mut x = reduction.expand(&x_free, &values);
        for &i in &reduction.free {
            let s = &problem.sets[i];
            let v = x[i];
            if s.distance(v) > 1e-9 * (1.0 + v.abs()) {
                return None;
            }
            x[i] = s.project(v);
        }
        (x, y)
    };
    if problem.residual(&x).ok()? > tol {
        return None;
    }

    let px = &problem.p * &x;
    let mut g = &px + &problem.q;
    if !y.is_empty() {
        g += problem.a.transpose() * &y;
    }
    let scale = 1.0 + px.amax() + problem.q.amax();
    let dual_tol = 1e-7 * scale;
    for &i in &fixed {
        let ok = match pattern[i] {
            Bound::Lower => g[i] >= -dual_tol,
            Bound::Upper => g[i] <= dual_tol,
            _ => true,
        };
        if !ok {
            return None;
        }
    }
    Some(x)
}

/// Substitution of fixed values for a subset of coordinates.
#[derive(Debug, Clone)]
pub(crate) struct FixedReduction {
    pub free: Vec<usize>,
    pub fixed: Vec<usize>,
    p_ff: DMatrix<f64>,
    p_fz: DMatrix<f64>,
    p_zz: DMatrix<f64>,
    a_f: DMatrix<f64>,
    a_z: DMatrix<f64>,
}

impl FixedReduction {
    /// `fixed` must be sorted and in range.
    pub fn new(problem: &Problem, fixed: &[usize]) -> Self {
        let n = problem.n();
        let mut is_fixed = vec![false; n];
        for &i in fixed {
            is_fixed[i] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
        let rows_f = problem.p.select_rows(&free);
        let rows_z = problem.p.select_rows(fixed);
        let (a_f, a_z) = if problem.m() == 0 {
            (DMatrix::zeros(0, free.len()), DMatrix::zeros(0, fixed.len()))
        } else {
            (
                problem.a.select_columns(&free),
                problem.a.select_columns(fixed),
            )
        };
        FixedReduction {
            p_ff: rows_f.select_columns(&free),
            p_fz: rows_f.select_columns(fixed),
            p_zz: rows_z.select_columns(fixed),
            a_f,
            a_z,
            free,
            fixed: fixed.to_vec(),
        }
    }

    /// The problem in the free coordinates with `values` substituted.
    pub fn reduce(&self, problem: &Problem, values: &DVector<f64>) -> Problem {
        let q_f = DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| problem.q[i]));
        let q_z = DVector::from_iterator(self.fixed.len(), self.fixed.iter().map(|&i| problem.q[i]));
        let q = q_f + &self.p_fz * values;
        let b = if problem.m() == 0 {
            DVector::zeros(0)
        } else {
            &problem.b - &self.a_z * values
        };
        let r = problem.r + q_z.dot(values) + 0.5 * values.dot(&(&self.p_zz * values));
        let sets = self.free.iter().map(|&i| problem.sets[i].clone()).collect();
        Problem::new(self.p_ff.clone(), q, r, self.a_f.clone(), b, sets)
    }

    pub fn expand(&self, x_free: &DVector<f64>, values: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.free.len() + self.fixed.len());
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = x_free[k];
        }
        for (k, &i) in self.fixed.iter().enumerate() {
            x[i] = values[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::solve_equality_qp;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn reduction_preserves_objective() {
        let p = Problem::new(
            dmatrix![4.0, 1.0, 0.5; 1.0, 3.0, 0.2; 0.5, 0.2, 2.0],
            dvector![1.0, -2.0, 0.5],
            1.5,
            dmatrix![1.0, 2.0, 3.0],
            dvector![4.0],
            vec![ConstraintSet::Reals, ConstraintSet::binary(), ConstraintSet::Reals],
        );
        let red = FixedReduction::new(&p, &[1]);
        let values = dvector![1.0];
        let rp = red.reduce(&p, &values);
        let xf = dvector![0.3, -0.7];
        let x = red.expand(&xf, &values);
        assert_eq!(x, dvector![0.3, 1.0, -0.7]);
        assert!((rp.objective(&xf).unwrap() - p.objective(&x).unwrap()).abs() < 1e-12);
        assert!((rp.residual(&xf).unwrap() - p.residual(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn equality_path_matches_kkt() {
        let p = Problem::new(
            dmatrix![2.0, 0.0; 0.0, 1.0],
            dvector![1.0, 1.0],
            0.0,
            dmatrix![1.0, 1.0],
            dvector![1.0],
            vec![ConstraintSet::Reals; 2],
        );
        let s = ConvexSolver::new(&p, ConvexOptions::default()).unwrap();
        let out = s.solve(&p, None).unwrap();
        let direct = solve_equality_qp(&p.p, &p.q, &p.a, &p.b).unwrap();
        assert_eq!(out.x, direct);
        assert!(out.exact);
    }

    #[test]
    fn box_constrained_least_squares() {
        // min (x-3)^2 + (y+1)^2 over [0,1]^2 -> (1, 0)
        let p = Problem::unconstrained(
            dmatrix![2.0, 0.0; 0.0, 2.0],
            dvector![-6.0, 2.0],
            10.0,
            vec![ConstraintSet::interval(0.0, 1.0); 2],
        );
        let s = ConvexSolver::new(&p, ConvexOptions::default()).unwrap();
        let out = s.solve(&p, None).unwrap();
        assert_eq!(out.x, dvector![1.0, 0.0]);
        assert!(out.exact);
    }

    #[test]
    fn nonneg_with_equality() {
        // min x^2 + y^2 + 2x s.t. x + y = 1, x, y >= 0 -> (0, 1)
        let p = Problem::new(
            dmatrix![2.0, 0.0; 0.0, 2.0],
            dvector![2.0, 0.0],
            0.0,
            dmatrix![1.0, 1.0],
            dvector![1.0],
            vec![ConstraintSet::NonnegReals; 2],
        );
        let s = ConvexSolver::new(&p, ConvexOptions::default()).unwrap();
        let out = s.solve(&p, None).unwrap();
        assert!((out.x - dvector![0.0, 1.0]).amax() < 1e-9);
        assert!(out.residual <= 1e-8);
    }

    #[test]
    fn rejects_nonconvex_sets() {
        let p = Problem::unconstrained(dmatrix![1.0], dvector![0.0], 0.0, vec![ConstraintSet::binary()]);
        assert!(matches!(
            ConvexSolver::new(&p, ConvexOptions::default()),
            Err(Error::UnsupportedSet { index: 0 })
        ));
    }
}
