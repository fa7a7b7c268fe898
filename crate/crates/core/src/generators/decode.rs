use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::symmetrize;
use crate::error::{Error, Result};
use crate::model::{ConstraintSet, Problem};

pub const CONSTELLATION: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
/// Mean symbol power of the uniform constellation.
const SYMBOL_POWER: f64 = 5.0;
/// Gray labels aligned with [`CONSTELLATION`]: 00, 01, 11, 10.
const GRAY: [u8; 4] = [0b00, 0b01, 0b11, 0b10];

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeInstance {
    pub problem: Problem,
    pub h: DMatrix<f64>,
    pub x_true: DVector<f64>,
    pub y: DVector<f64>,
}

/// Maximum-likelihood decoding of `y = Hx + v` with `x` over the 4-level
/// constellation, written as `||Hx - y||^2`.
///
/// SNR is average received signal power per component over noise variance,
/// so `sigma^2 = 5 n / 10^(snr_db / 10)`. Pass `f64::INFINITY` for noiseless
/// data.
pub fn gen_signal_decode(n: usize, p_dim: usize, snr_db: f64, seed: u64) -> Result<DecodeInstance> {
    if n == 0 || p_dim < n {
        return Err(Error::InvalidParams(format!(
            "need 0 < n <= p (n={n}, p={p_dim})"
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidParams("snr must be a number".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = DMatrix::from_fn(p_dim, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x_true = DVector::from_fn(n, |_, _| CONSTELLATION[rng.random_range(0..4)]);
    let sigma = (SYMBOL_POWER * n as f64 / 10f64.powf(snr_db / 10.0)).sqrt();
    let noise = DVector::from_fn(p_dim, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    let y = &h * &x_true + noise;

    let ht = h.transpose();
    let p = symmetrize(&ht * &h * 2.0);
    let q = &ht * &y * -2.0;
    let r = y.norm_squared();
    let problem = Problem::unconstrained(p, q, r, vec![ConstraintSet::finite(CONSTELLATION); n]);
    Ok(DecodeInstance {
        problem,
        h,
        x_true,
        y,
    })
}

fn label(v: f64) -> Result<u8> {
    CONSTELLATION
        .iter()
        .position(|&c| c == v)
        .map(|k| GRAY[k])
        .ok_or_else(|| Error::InvalidParams(format!("{v} is not a constellation point")))
}

/// Fraction of the `2n` Gray-coded bits that differ.
pub fn bit_error_rate(x_hat: &DVector<f64>, x_true: &DVector<f64>) -> Result<f64> {
    if x_hat.len() != x_true.len() {
        return Err(Error::DimensionMismatch {
            what: "x_hat",
            expected: x_true.len(),
            got: x_hat.len(),
        });
    }
    if x_hat.is_empty() {
        return Ok(0.0);
    }
    let mut errors = 0u32;
    for (&a, &b) in x_hat.iter().zip(x_true.iter()) {
        errors += (label(a)? ^ label(b)?).count_ones();
    }
    Ok(errors as f64 / (2 * x_hat.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use std::time::Instant;

    #[test]
    fn noiseless_truth_has_zero_objective() {
        let inst = gen_signal_decode(6, 20, f64::INFINITY, 4).unwrap();
        assert_eq!(inst.y, &inst.h * &inst.x_true);
        assert!(inst.problem.objective(&inst.x_true).unwrap().abs() < 1e-9);
        assert!(inst.problem.validate().is_ok());
    }

    #[test]
    fn objective_is_squared_misfit() {
        let inst = gen_signal_decode(5, 12, 8.0, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = DVector::from_fn(5, |_, _| rng.random_range(-4.0..4.0));
            let direct = (&inst.h * &x - &inst.y).norm_squared();
            let f = inst.problem.objective(&x).unwrap();
            assert!((f - direct).abs() <= 1e-9 * (1.0 + direct));
        }
    }

    #[test]
    fn paper_scale_is_fast() {
        let start = Instant::now();
        let inst = gen_signal_decode(400, 2000, 8.0, 0).unwrap();
        assert!(start.elapsed().as_secs_f64() < 5.0);
        assert_eq!(inst.problem.n(), 400);
    }

    #[test]
    fn rejects_short_channel() {
        assert!(gen_signal_decode(10, 5, 8.0, 0).is_err());
    }

    #[test]
    fn ber_values() {
        let t = dvector![-3.0, -1.0, 1.0, 3.0];
        assert_eq!(bit_error_rate(&t, &t).unwrap(), 0.0);
        let one = dvector![-1.0, -1.0, 1.0, 3.0];
        assert_eq!(bit_error_rate(&one, &t).unwrap(), 1.0 / 8.0);
        // -3 <-> 1 and -1 <-> 3 flip both bits
        let worst = dvector![1.0, 3.0, -3.0, -1.0];
        assert_eq!(bit_error_rate(&worst, &t).unwrap(), 1.0);
        assert!(bit_error_rate(&dvector![0.0, 1.0, 1.0, 1.0], &t).is_err());
    }

    #[test]
    fn ber_matches_table_lookup() {
        let table = ["00", "01", "11", "10"];
        for i in 0..4 {
            for j in 0..4 {
                let d = table[i]
                    .chars()
                    .zip(table[j].chars())
                    .filter(|(a, b)| a != b)
                    .count();
                let ber = bit_error_rate(&dvector![CONSTELLATION[i]], &dvector![CONSTELLATION[j]]).unwrap();
                assert_eq!(ber, d as f64 / 2.0);
            }
        }
    }
}
