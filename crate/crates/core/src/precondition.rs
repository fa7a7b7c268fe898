//! Diagonal scaling of the splitting constraints.
//!
//! The scaled iteration runs ADMM on `[EA; F] x - [0; F] z = [Eb; 0]`. We only
//! normalize the rows of `A` and keep `F = I`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionMode {
    None,
    #[serde(rename = "l1")]
    RowL1,
    #[default]
    #[serde(rename = "l2")]
    RowL2,
}

impl FromStr for PreconditionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(PreconditionMode::None),
            "l1" => Ok(PreconditionMode::RowL1),
            "l2" => Ok(PreconditionMode::RowL2),
            other => Err(format!("unknown precondition mode `{other}` (none, l1, l2)")),
        }
    }
}

impl fmt::Display for PreconditionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PreconditionMode::None => "none",
            PreconditionMode::RowL1 => "l1",
            PreconditionMode::RowL2 => "l2",
        })
    }
}

/// Diagonals of `E` (length m) and `F` (length n).
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub e: DVector<f64>,
    pub f: DVector<f64>,
}

impl Scaling {
    pub fn identity(n: usize, m: usize) -> Self {
        Scaling {
            e: DVector::from_element(m, 1.0),
            f: DVector::from_element(n, 1.0),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.e
            .iter()
            .chain(self.f.iter())
            .all(|v| v.is_finite() && *v > 0.0)
    }

    /// `diag(e) * A`.
    pub fn scale_rows(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = a.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= self.e[i];
        }
        out
    }
}

pub fn compute_scaling(problem: &Problem, mode: PreconditionMode) -> Scaling {
    let (n, m) = (problem.n(), problem.m());
    let mut scaling = Scaling::identity(n, m);
    if mode == PreconditionMode::None {
        return scaling;
    }
    for (i, row) in problem.a.row_iter().enumerate() {
        let norm = match mode {
            PreconditionMode::RowL1 => row.iter().map(|v| v.abs()).sum::<f64>(),
            _ => row.norm(),
        };
        if norm > 0.0 && norm.is_finite() {
            scaling.e[i] = 1.0 / norm;
        }
    }
    scaling
}

/// Largest singular value over the smallest one above `1e-12 * sigma_max`.
pub fn effective_condition_number(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            what: "condition number input",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let sigma = SymmetricEigen::new(sym).eigenvalues.map(f64::abs);
    let max = sigma.max();
    if max <= 0.0 {
        return Err(Error::InvalidParams("zero matrix has no condition number".into()));
    }
    let min = sigma
        .iter()
        .copied()
        .filter(|&s| s > 1e-12 * max)
        .fold(f64::INFINITY, f64::min);
    Ok(max / min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConstraintSet;
    use nalgebra::{dmatrix, dvector};

    fn with_a(a: DMatrix<f64>) -> Problem {
        let n = a.ncols();
        let m = a.nrows();
        Problem::new(
            DMatrix::identity(n, n),
            DVector::zeros(n),
            0.0,
            a,
            DVector::zeros(m),
            vec![ConstraintSet::Reals; n],
        )
    }

    #[test]
    fn row_norm_examples() {
        let p = with_a(dmatrix![3.0, 4.0]);
        let s = compute_scaling(&p, PreconditionMode::RowL2);
        assert_eq!(s.e, dvector![0.2]);
        assert_eq!(s.f, dvector![1.0, 1.0]);
        let s = compute_scaling(&p, PreconditionMode::RowL1);
        assert_eq!(s.e, dvector![1.0 / 7.0]);
        let s = compute_scaling(&p, PreconditionMode::None);
        assert_eq!(s, Scaling::identity(2, 1));
    }

    #[test]
    fn zero_rows_keep_unit_scale() {
        let p = with_a(dmatrix![0.0, 0.0]);
        for mode in [PreconditionMode::None, PreconditionMode::RowL1, PreconditionMode::RowL2] {
            assert_eq!(compute_scaling(&p, mode).e, dvector![1.0]);
        }
    }

    #[test]
    fn no_constraints() {
        let p = Problem::unconstrained(DMatrix::identity(2, 2), DVector::zeros(2), 0.0, vec![ConstraintSet::Reals; 2]);
        let s = compute_scaling(&p, PreconditionMode::RowL2);
        assert_eq!(s.e.len(), 0);
        assert!(s.is_valid());
    }

    #[test]
    fn condition_numbers() {
        assert_eq!(effective_condition_number(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        let d = DMatrix::from_diagonal(&dvector![4.0, 1.0, 0.0]);
        assert_eq!(effective_condition_number(&d).unwrap(), 4.0);
        let d = DMatrix::from_diagonal(&dvector![9.0, 1.0]);
        assert!((effective_condition_number(&d).unwrap() - 9.0).abs() < 1e-12);
        assert!(effective_condition_number(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("l2".parse::<PreconditionMode>().unwrap(), PreconditionMode::RowL2);
        assert_eq!(PreconditionMode::RowL1.to_string(), "l1");
        assert!("l3".parse::<PreconditionMode>().is_err());
    }
}
