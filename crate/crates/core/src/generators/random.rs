use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::symmetrize;
use crate::error::{Error, Result};
use crate::model::{ConstraintSet, Problem};

/// Random mixed-integer QP with a known feasible point.
///
/// `P = QQ'` with standard normal `Q`, `q` and `A`. The first `n_bool`
/// coordinates are binary, the next `n_nonneg` nonnegative, the rest free.
/// `b = A x0` for a point `x0` drawn from the sets, and `r` shifts the
/// unconstrained minimum of the quadratic to zero. Returns `(problem, x0)`.
pub fn gen_random_miqp(
    n: usize,
    m: usize,
    n_bool: usize,
    n_nonneg: usize,
    seed: u64,
) -> Result<(Problem, DVector<f64>)> {
    if n == 0 || n_bool + n_nonneg > n || m > n {
        return Err(Error::InvalidParams(format!(
            "need n > 0, n_bool + n_nonneg <= n and m <= n (n={n}, m={m}, n_bool={n_bool}, n_nonneg={n_nonneg})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let qm = DMatrix::from_fn(n, n, |_, _| normal());
    let q = DVector::from_fn(n, |_, _| normal());
    let a = DMatrix::from_fn(m, n, |_, _| normal());
    let p = symmetrize(&qm * qm.transpose());

    let sets: Vec<ConstraintSet> = (0..n)
        .map(|i| {
            if i < n_bool {
                ConstraintSet::binary()
            } else if i < n_bool + n_nonneg {
                ConstraintSet::NonnegReals
            } else {
                ConstraintSet::Reals
            }
        })
        .collect();
    let x0 = DVector::from_iterator(
        n,
        sets.iter().map(|s| match s {
            ConstraintSet::NonnegReals => {
                let z: f64 = rng.sample(StandardNormal);
                z.abs()
            }
            ConstraintSet::Reals => rng.sample(StandardNormal),
            _ => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            }
        }),
    );
    let b = &a * &x0;
    let r = 0.5 * pseudo_quadratic(&p, &q);
    Ok((Problem::new(p, q, r, a, b, sets), x0))
}

/// Random equality-constrained convex QP over the reals.
///
/// `P = M'M` with `M` a standard normal `2n x n` matrix, so `P` is well
/// conditioned with high probability. `q`, `A` and `x0` are standard normal,
/// `b = A x0` and `r = 0`. Returns `(problem, x0)`.
pub fn gen_random_convex_qp(n: usize, m: usize, seed: u64) -> Result<(Problem, DVector<f64>)> {
    if n == 0 || m > n {
        return Err(Error::InvalidParams(format!(
            "need n > 0 and m <= n (n={n}, m={m})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let mm = DMatrix::from_fn(2 * n, n, |_, _| normal());
    let q = DVector::from_fn(n, |_, _| normal());
    let a = DMatrix::from_fn(m, n, |_, _| normal());
    let x0 = DVector::from_fn(n, |_, _| normal());
    let p = symmetrize(mm.transpose() * mm);
    let b = &a * &x0;
    Ok((
        Problem::new(p, q, 0.0, a, b, vec![ConstraintSet::Reals; n]),
        x0,
    ))
}

/// `q' P^+ q` for symmetric PSD `P`.
fn pseudo_quadratic(p: &DMatrix<f64>, q: &DVector<f64>) -> f64 {
    let eig = SymmetricEigen::new(p.clone());
    let cutoff = 1e-12 * eig.eigenvalues.amax();
    eig.eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .filter(|(&l, _)| l > cutoff)
        .map(|(&l, v)| v.dot(q).powi(2) / l)
        .sum()
}
