//! Canonical problem form
//!
//! ```text
//!     minimize    (1/2) x'Px + q'x + r
//!     subject to  Ax = b
//!                 x_i in X_i,  i = 1..n
//! ```
//!
//! where each `X_i` is a closed nonempty subset of the real line described by a
//! [`ConstraintSet`].

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on `|P_ij - P_ji|`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative tolerance on the smallest eigenvalue of `P`.
pub const PSD_TOL: f64 = 1e-8;

/// One coordinate's constraint set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ConstraintSet {
    #[serde(rename = "reals")]
    Reals,
    #[serde(rename = "nonneg")]
    NonnegReals,
    #[serde(rename = "interval")]
    Interval { lo: f64, hi: f64 },
    /// Sorted, strictly increasing list of admissible values.
    #[serde(rename = "finite")]
    FiniteSet { values: Vec<f64> },
    #[serde(rename = "intrange")]
    IntegerRange { lo: i64, hi: i64 },
}

impl ConstraintSet {
    pub fn binary() -> Self {
        ConstraintSet::FiniteSet {
            values: vec![0.0, 1.0],
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        ConstraintSet::Interval { lo, hi }
    }

    pub fn finite(values: impl Into<Vec<f64>>) -> Self {
        ConstraintSet::FiniteSet {
            values: values.into(),
        }
    }

    pub fn int_range(lo: i64, hi: i64) -> Self {
        ConstraintSet::IntegerRange { lo, hi }
    }

    /// A singleton set `{v}`.
    pub fn fixed(v: f64) -> Self {
        ConstraintSet::Interval { lo: v, hi: v }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            ConstraintSet::Reals | ConstraintSet::NonnegReals | ConstraintSet::Interval { .. } => {
                true
            }
            ConstraintSet::FiniteSet { values } => values.len() == 1,
            ConstraintSet::IntegerRange { lo, hi } => lo == hi,
        }
    }

    /// Whether the set is a finite list of points (the sets the oracle enumerates).
    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            ConstraintSet::FiniteSet { .. } | ConstraintSet::IntegerRange { .. }
        )
    }

    /// Smallest and largest element; infinite for unbounded sets.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            ConstraintSet::Reals => (f64::NEG_INFINITY, f64::INFINITY),
            ConstraintSet::NonnegReals => (0.0, f64::INFINITY),
            ConstraintSet::Interval { lo, hi } => (*lo, *hi),
            ConstraintSet::FiniteSet { values } => (
                values.first().copied().unwrap_or(f64::NAN),
                values.last().copied().unwrap_or(f64::NAN),
            ),
            ConstraintSet::IntegerRange { lo, hi } => (*lo as f64, *hi as f64),
        }
    }

    /// The convex hull as a set of the same enum.
    pub fn hull(&self) -> ConstraintSet {
        match self {
            ConstraintSet::FiniteSet { .. } | ConstraintSet::IntegerRange { .. } => {
                let (lo, hi) = self.bounds();
                ConstraintSet::Interval { lo, hi }
            }
            other => other.clone(),
        }
    }

    /// Number of elements of a discrete set.
    pub fn cardinality(&self) -> Option<u128> {
        match self {
            ConstraintSet::FiniteSet { values } => Some(values.len() as u128),
            ConstraintSet::IntegerRange { lo, hi } if hi >= lo => {
                Some((*hi as i128 - *lo as i128 + 1) as u128)
            }
            ConstraintSet::IntegerRange { .. } => Some(0),
            _ => None,
        }
    }

    /// The `k`-th element of a discrete set in increasing order.
    pub fn element(&self, k: u128) -> Option<f64> {
        match self {
            ConstraintSet::FiniteSet { values } => values.get(k as usize).copied(),
            ConstraintSet::IntegerRange { lo, hi } => {
                let v = *lo as i128 + k as i128;
                (v <= *hi as i128).then_some(v as f64)
            }
            _ => None,
        }
    }

    /// Distance from `z` to the set.
    pub fn distance(&self, z: f64) -> f64 {
        (self.project(z) - z).abs()
    }

    /// Reason the set violates its invariants, if any.
    pub fn defect(&self) -> Option<String> {
        match self {
            ConstraintSet::Reals | ConstraintSet::NonnegReals => None,
            ConstraintSet::Interval { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() {
                    Some(format!("interval bounds must be finite, got [{lo}, {hi}]"))
                } else if lo > hi {
                    Some(format!("interval lo > hi ({lo} > {hi})"))
                } else {
                    None
                }
            }
            ConstraintSet::FiniteSet { values } => {
                if values.is_empty() {
                    Some("finite set is empty".into())
                } else if values.iter().any(|v| !v.is_finite()) {
                    Some("finite set has a non-finite value".into())
                } else if values.windows(2).any(|w| w[0] >= w[1]) {
                    Some("finite set values are not strictly increasing".into())
                } else {
                    None
                }
            }
            ConstraintSet::IntegerRange { lo, hi } => {
                (lo > hi).then(|| format!("integer range lo > hi ({lo} > {hi})"))
            }
        }
    }
}

/// One way a [`Problem`] fails its invariants.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    PNotSquare { rows: usize, cols: usize },
    QLength { n: usize, got: usize },
    AColumns { n: usize, got: usize },
    BLength { m: usize, got: usize },
    SetsLength { n: usize, got: usize },
    NonFinite { field: &'static str, index: usize },
    PAsymmetric { i: usize, j: usize },
    PNotPsd { min_eigenvalue: f64 },
    BadSet { index: usize, reason: String },
    ZeroRowNonzeroRhs { row: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PNotSquare { rows, cols } => write!(f, "P is not square ({rows}x{cols})"),
            Violation::QLength { n, got } => write!(f, "q length ≠ n ({got} vs {n})"),
            Violation::AColumns { n, got } => write!(f, "A columns ≠ n ({got} vs {n})"),
            Violation::BLength { m, got } => write!(f, "b length ≠ m ({got} vs {m})"),
            Violation::SetsLength { n, got } => write!(f, "sets length ≠ n ({got} vs {n})"),
            Violation::NonFinite { field, index } => {
                write!(f, "{field} has a non-finite entry at flat index {index}")
            }
            Violation::PAsymmetric { i, j } => write!(f, "P not symmetric at ({i}, {j})"),
            Violation::PNotPsd { min_eigenvalue } => {
                write!(f, "P not PSD (smallest eigenvalue {min_eigenvalue:e})")
            }
            Violation::BadSet { index, reason } => write!(f, "set {index}: {reason}"),
            Violation::ZeroRowNonzeroRhs { row } => {
                write!(f, "row {row} of A is zero but b is not (infeasible)")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: f64,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub sets: Vec<ConstraintSet>,
}

impl Problem {
    pub fn new(
        p: DMatrix<f64>,
        q: DVector<f64>,
        r: f64,
        a: DMatrix<f64>,
        b: DVector<f64>,
        sets: Vec<ConstraintSet>,
    ) -> Self {
        Problem {
            p,
            q,
            r,
            a,
            b,
            sets,
        }
    }

    /// A problem without equality constraints.
    pub fn unconstrained(
        p: DMatrix<f64>,
        q: DVector<f64>,
        r: f64,
        sets: Vec<ConstraintSet>,
    ) -> Self {
        let n = q.len();
        Problem::new(p, q, r, DMatrix::zeros(0, n), DVector::zeros(0), sets)
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn is_convex(&self) -> bool {
        self.sets.iter().all(ConstraintSet::is_convex)
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        self.validate_impl(true)
    }

    /// As [`Problem::validate`], optionally skipping the eigenvalue test on `P`.
    pub(crate) fn validate_impl(&self, check_psd: bool) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let n = self.p.nrows();
        if self.p.ncols() != n {
            out.push(Violation::PNotSquare {
                rows: n,
                cols: self.p.ncols(),
            });
        }
        if self.q.len() != n {
            out.push(Violation::QLength {
                n,
                got: self.q.len(),
            });
        }
        let m = self.a.nrows();
        if m > 0 && self.a.ncols() != n {
            out.push(Violation::AColumns {
                n,
                got: self.a.ncols(),
            });
        }
        if self.b.len() != m {
            out.push(Violation::BLength {
                m,
                got: self.b.len(),
            });
        }
        if self.sets.len() != n {
            out.push(Violation::SetsLength {
                n,
                got: self.sets.len(),
            });
        }
        for (field, data) in [
            ("P", self.p.as_slice()),
            ("q", self.q.as_slice()),
            ("A", self.a.as_slice()),
            ("b", self.b.as_slice()),
        ] {
            if let Some(index) = data.iter().position(|v| !v.is_finite()) {
                out.push(Violation::NonFinite { field, index });
            }
        }
        if !self.r.is_finite() {
            out.push(Violation::NonFinite {
                field: "r",
                index: 0,
            });
        }
        for (index, s) in self.sets.iter().enumerate() {
            if let Some(reason) = s.defect() {
                out.push(Violation::BadSet { index, reason });
            }
        }
        if self.a.ncols() == n && self.b.len() == m {
            for row in 0..m {
                if self.a.row(row).iter().all(|&v| v == 0.0) && self.b[row] != 0.0 {
                    out.push(Violation::ZeroRowNonzeroRhs { row });
                }
            }
        }

        let p_ok = self.p.ncols() == n && self.p.iter().all(|v| v.is_finite());
        if p_ok && n > 0 {
            let scale = self.p.amax();
            let mut symmetric = true;
            'outer: for j in 0..n {
                for i in (j + 1)..n {
                    if (self.p[(i, j)] - self.p[(j, i)]).abs() > SYMMETRY_TOL * scale {
                        out.push(Violation::PAsymmetric { i, j });
                        symmetric = false;
                        break 'outer;
                    }
                }
            }
            if check_psd && symmetric && scale > 0.0 {
                let sym = (&self.p + self.p.transpose()) * 0.5;
                let eig = SymmetricEigen::new(sym).eigenvalues;
                let min = eig.min();
                let norm = eig.amax();
                if min < -PSD_TOL * norm {
                    out.push(Violation::PNotPsd {
                        min_eigenvalue: min,
                    });
                }
            }
        }

        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    pub(crate) fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "point",
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `(1/2) x'Px + q'x + r`.
    pub fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_point(x)?;
        Ok(0.5 * x.dot(&(&self.p * x)) + self.q.dot(x) + self.r)
    }

    /// `||Ax - b||_2` on the unscaled data; zero when there are no constraints.
    pub fn residual(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_point(x)?;
        if self.m() == 0 {
            return Ok(0.0);
        }
        Ok((&self.a * x - &self.b).norm())
    }

    /// Largest per-coordinate distance from `x` to its set.
    pub fn membership_distance(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_point(x)?;
        Ok(self
            .sets
            .iter()
            .zip(x.iter())
            .map(|(s, &v)| s.distance(v))
            .fold(0.0, f64::max))
    }

    pub fn from_json(text: &str) -> Result<Problem> {
        let raw: ProblemJson = serde_json::from_str(text).map_err(|e| Error::Json(e.to_string()))?;
        raw.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ProblemJson::from(self)).expect("problem serializes")
    }
}

/// Wire form of a [`Problem`]: dense row-major matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemJson {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub r: f64,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub sets: Vec<ConstraintSet>,
}

fn dense(field: &str, rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Json(format!(
                "field `{field}` row {i} has length {}, expected {cols}",
                row.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl TryFrom<ProblemJson> for Problem {
    type Error = Error;

    fn try_from(raw: ProblemJson) -> Result<Problem> {
        let n = raw.p.len();
        let p = dense("P", &raw.p, n)?;
        let a_cols = raw.a.first().map_or(n, Vec::len);
        let a = dense("A", &raw.a, a_cols)?;
        Ok(Problem::new(
            p,
            DVector::from_vec(raw.q),
            raw.r,
            a,
            DVector::from_vec(raw.b),
            raw.sets,
        ))
    }
}

impl From<&Problem> for ProblemJson {
    fn from(p: &Problem) -> Self {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        ProblemJson {
            p: rows(&p.p),
            q: p.q.iter().copied().collect(),
            r: p.r,
            a: rows(&p.a),
            b: p.b.iter().copied().collect(),
            sets: p.sets.clone(),
        }
    }
}
