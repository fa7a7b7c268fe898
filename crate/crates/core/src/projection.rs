//! Euclidean projection onto the constraint sets and random initialization
//! inside their convex hulls.
//!
//! Projection onto a nonconvex set is not unique at midpoints; ties always go
//! to the smaller candidate.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ConstraintSet;

impl ConstraintSet {
    /// Nearest point of the set to `z`.
    pub fn project(&self, z: f64) -> f64 {
        match self {
            ConstraintSet::Reals => z,
            ConstraintSet::NonnegReals => z.max(0.0),
            ConstraintSet::Interval { lo, hi } => z.max(*lo).min(*hi),
            ConstraintSet::FiniteSet { values } => nearest_sorted(values, z),
            ConstraintSet::IntegerRange { lo, hi } => {
                let (lo, hi) = (*lo as f64, *hi as f64);
                let below = z.floor();
                let rounded = if z - below <= 0.5 { below } else { below + 1.0 };
                rounded.max(lo).min(hi)
            }
        }
    }
}

/// Closest entry of a sorted, nonempty slice by binary search.
fn nearest_sorted(values: &[f64], z: f64) -> f64 {
    let idx = values.partition_point(|&v| v < z);
    if idx == 0 {
        return values[0];
    }
    if idx == values.len() {
        return values[idx - 1];
    }
    let (lower, upper) = (values[idx - 1], values[idx]);
    if (z - lower).abs() <= (upper - z).abs() {
        lower
    } else {
        upper
    }
}

pub fn project_coord(set: &ConstraintSet, z: f64) -> f64 {
    set.project(z)
}

/// Coordinatewise projection onto the product set.
pub fn project(sets: &[ConstraintSet], z: &DVector<f64>) -> Result<DVector<f64>> {
    let mut out = z.clone();
    project_in_place(sets, out.as_mut_slice())?;
    Ok(out)
}

pub fn project_in_place(sets: &[ConstraintSet], z: &mut [f64]) -> Result<()> {
    if sets.len() != z.len() {
        return Err(Error::DimensionMismatch {
            what: "projection input",
            expected: sets.len(),
            got: z.len(),
        });
    }
    for (s, v) in sets.iter().zip(z.iter_mut()) {
        *v = s.project(*v);
    }
    Ok(())
}

/// Random point of the convex hull of the product set.
///
/// Bounded hulls are sampled uniformly, the real line from a standard normal
/// and the half-line from its absolute value.
pub fn sample_hull<R: Rng + ?Sized>(sets: &[ConstraintSet], rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(
        sets.len(),
        sets.iter().map(|s| match s {
            ConstraintSet::Reals => StandardNormal.sample(rng),
            ConstraintSet::NonnegReals => {
                let v: f64 = StandardNormal.sample(rng);
                v.abs()
            }
            _ => {
                let (lo, hi) = s.bounds();
                if lo < hi {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            }
        }),
    )
}
