//! Quasi-definite KKT systems and their cached `LDL'` factorizations.
//!
//! The x-update of the scaled iteration solves
//!
//! ```text
//!     [ P + rho F^2   A'E      ] [ x ]   [ rhs ]
//!     [ EA            -I / rho ] [ v ] = [ 0   ]
//! ```
//!
//! The matrix only depends on `(P, A, E, F, rho)`, so it is factored once and
//! reused for every iteration, restart and problem instance that shares that
//! data. For quasi-definite matrices an unpivoted `LDL'` exists in any
//! symmetric ordering, so we factor in natural order.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::precondition::Scaling;

/// Relative pivot threshold below which the matrix is declared singular.
pub const PIVOT_TOL: f64 = 1e-12;
/// Regularization used by [`solve_equality_qp`].
pub const EQUALITY_QP_REG: f64 = 1e-9;
/// Largest acceptable relative KKT residual after refinement.
pub const EQUALITY_QP_TOL: f64 = 1e-6;

static FACTORIZATIONS: AtomicU64 = AtomicU64::new(0);

/// Number of factorizations performed by this process so far.
pub fn factorization_count() -> u64 {
    FACTORIZATIONS.load(Ordering::Relaxed)
}

/// Identifies the data a factorization was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(u64);

impl Fingerprint {
    pub fn of_matrix(k: &DMatrix<f64>) -> Self {
        let mut h = DefaultHasher::new();
        k.nrows().hash(&mut h);
        k.ncols().hash(&mut h);
        for v in k.iter() {
            v.to_bits().hash(&mut h);
        }
        Fingerprint(h.finish())
    }
}

/// The block matrix `[P + rho F^2, A'E; EA, -I/rho]`.
pub fn assemble(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    scaling: &Scaling,
    rho: f64,
) -> Result<DMatrix<f64>> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::NonPositiveRho(rho));
    }
    let n = p.nrows();
    let m = a.nrows();
    if p.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "P columns",
            expected: n,
            got: p.ncols(),
        });
    }
    if m > 0 && a.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "A columns",
            expected: n,
            got: a.ncols(),
        });
    }
    if scaling.f.len() != n || scaling.e.len() != m {
        return Err(Error::DimensionMismatch {
            what: "scaling",
            expected: n + m,
            got: scaling.f.len() + scaling.e.len(),
        });
    }
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(p);
    for i in 0..n {
        k[(i, i)] += rho * scaling.f[i] * scaling.f[i];
    }
    if m > 0 {
        let ea = scaling.scale_rows(a);
        k.view_mut((n, 0), (m, n)).copy_from(&ea);
        k.view_mut((0, n), (n, m)).copy_from(&ea.transpose());
        for i in 0..m {
            k[(n + i, n + i)] = -1.0 / rho;
        }
    }
    Ok(k)
}

/// Dense `L D L'` factors of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct KktFactorization {
    n: usize,
    m: usize,
    rho: Option<f64>,
    /// Row-major strictly lower triangle of the unit lower-triangular `L`.
    l: Vec<f64>,
    d: DVector<f64>,
    fingerprint: Fingerprint,
}

impl KktFactorization {
    /// Unpivoted factorization of `k`, expected to have `n` positive and `m`
    /// negative pivots.
    pub fn factor(k: &DMatrix<f64>, n: usize, m: usize) -> Result<Self> {
        let dim = n + m;
        if k.nrows() != dim || k.ncols() != dim {
            return Err(Error::DimensionMismatch {
                what: "KKT matrix",
                expected: dim,
                got: k.nrows(),
            });
        }
        FACTORIZATIONS.fetch_add(1, Ordering::Relaxed);
        let tol = PIVOT_TOL * k.amax();
        let mut l = vec![0.0; dim * dim];
        let mut d = DVector::zeros(dim);
        // t[j] = L[i][j] * d[j] for the current row i
        let mut t = vec![0.0; dim];
        for i in 0..dim {
            for j in 0..i {
                let row_j = &l[j * dim..j * dim + j];
                let s: f64 = t[..j].iter().zip(row_j).map(|(a, b)| a * b).sum();
                let lij = (k[(i, j)] - s) / d[j];
                l[i * dim + j] = lij;
                t[j] = lij * d[j];
            }
            let s: f64 = t[..i]
                .iter()
                .zip(&l[i * dim..i * dim + i])
                .map(|(a, b)| a * b)
                .sum();
            let pivot = k[(i, i)] - s;
            if pivot.is_nan() || pivot.abs() <= tol {
                return Err(Error::SingularKkt { index: i, pivot });
            }
            d[i] = pivot;
        }
        Ok(KktFactorization {
            n,
            m,
            rho: None,
            l,
            d,
            fingerprint: Fingerprint::of_matrix(k),
        })
    }

    /// Assembles and factors the matrix for `(P, A, scaling, rho)`.
    pub fn build(
        p: &DMatrix<f64>,
        a: &DMatrix<f64>,
        scaling: &Scaling,
        rho: f64,
    ) -> Result<Self> {
        let k = assemble(p, a, scaling, rho)?;
        let mut fac = Self::factor(&k, p.nrows(), a.nrows())?;
        fac.rho = Some(rho);
        Ok(fac)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn pivots(&self) -> &DVector<f64> {
        &self.d
    }

    /// Number of positive and negative pivots.
    pub fn signature(&self) -> (usize, usize) {
        let pos = self.d.iter().filter(|&&v| v > 0.0).count();
        (pos, self.d.len() - pos)
    }

    pub fn l(&self) -> DMatrix<f64> {
        let dim = self.dim();
        DMatrix::from_fn(dim, dim, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => self.l[i * dim + j],
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => 0.0,
        })
    }

    /// `L diag(d) L'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let l = self.l();
        &l * DMatrix::from_diagonal(&self.d) * l.transpose()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        let dim = self.dim();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "KKT right-hand side",
                expected: dim,
                got: x.len(),
            });
        }
        for i in 1..dim {
            let row = &self.l[i * dim..i * dim + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] -= s;
        }
        for (xi, di) in x.iter_mut().zip(self.d.iter()) {
            *xi /= di;
        }
        for i in (1..dim).rev() {
            let xi = x[i];
            let row = &self.l[i * dim..i * dim + i];
            for (xk, lik) in x[..i].iter_mut().zip(row) {
                *xk -= lik * xi;
            }
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = rhs.clone();
        self.solve_in_place(x.as_mut_slice())?;
        Ok(x)
    }
}

/// Equality-constrained QP `min (1/2)x'Px + q'x s.t. Ax = b` with a cached
/// regularized factorization, so that many `(q, b)` can share it.
#[derive(Debug, Clone)]
pub struct EqualityQp {
    p: DMatrix<f64>,
    a: DMatrix<f64>,
    fac: KktFactorization,
}

impl EqualityQp {
    pub fn new(p: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        let m = a.nrows();
        let a = if m == 0 { DMatrix::zeros(0, n) } else { a.clone() };
        let scaling = Scaling::identity(n, m);
        let mut k = assemble(p, &a, &scaling, 1.0)?;
        for i in 0..n {
            k[(i, i)] += EQUALITY_QP_REG - 1.0;
        }
        for i in n..n + m {
            k[(i, i)] = -EQUALITY_QP_REG;
        }
        let fac = KktFactorization::factor(&k, n, m)?;
        Ok(EqualityQp {
            p: p.clone(),
            a,
            fac,
        })
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// `[P A'; A 0] * [x; y]`
    fn apply_unregularized(&self, sol: &DVector<f64>) -> DVector<f64> {
        let (n, m) = (self.n(), self.m());
        let x = sol.rows(0, n);
        let y = sol.rows(n, m);
        let mut out = DVector::zeros(n + m);
        let mut top = &self.p * x;
        if m > 0 {
            top += self.a.transpose() * y;
            out.rows_mut(n, m).copy_from(&(&self.a * x));
        }
        out.rows_mut(0, n).copy_from(&top);
        out
    }

    /// Primal solution and multipliers `y` with `Px + q + A'y = 0`.
    pub fn solve_with_multipliers(
        &self,
        q: &DVector<f64>,
        b: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let (n, m) = (self.n(), self.m());
        if q.len() != n {
            return Err(Error::DimensionMismatch {
                what: "q",
                expected: n,
                got: q.len(),
            });
        }
        if b.len() != m {
            return Err(Error::DimensionMismatch {
                what: "b",
                expected: m,
                got: b.len(),
            });
        }
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(-q));
        rhs.rows_mut(n, m).copy_from(b);

        let mut sol = self.fac.solve(&rhs)?;
        let correction = self.fac.solve(&(&rhs - self.apply_unregularized(&sol)))?;
        sol += correction;

        let residual = (self.apply_unregularized(&sol) - &rhs).norm() / (1.0 + rhs.norm());
        if residual.is_nan() || residual > EQUALITY_QP_TOL {
            return Err(Error::InconsistentConstraints { residual });
        }
        // multipliers of the system [P A'; A 0][x; w] = [-q; b] satisfy Px + A'w = -q
        Ok((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
    }

    pub fn solve(&self, q: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.solve_with_multipliers(q, b).map(|(x, _)| x)
    }
}

/// Minimizer of `(1/2)x'Px + q'x` subject to `Ax = b`.
pub fn solve_equality_qp(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    EqualityQp::new(p, a)?.solve(q, b)
}
