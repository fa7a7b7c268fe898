//! Hybrid vehicle energy management over a horizon of `T` steps.
//!
//! Per step `t` the canonical vector holds eight coordinates, in this order:
//!
//! | name         | set              | meaning                          |
//! |--------------|------------------|----------------------------------|
//! | `P_batt[t]`  | reals            | battery power                    |
//! | `P_eng[t]`   | `[0, P_max]`     | engine power                     |
//! | `z[t]`       | `{0, 1}`         | engine on                        |
//! | `E[t+1]`     | `[0, E_max]`     | stored energy after the step     |
//! | `s[t]`       | `>= 0`           | power surplus                    |
//! | `c[t]`       | `>= 0`           | engine headroom `P_max z - P_eng`|
//! | `w[t]`       | `>= 0`           | `(z[t] - z[t-1])_+`              |
//! | `h[t]`       | `>= 0`           | `w[t] - (z[t] - z[t-1])`         |
//!
//! with constraint rows
//!
//! ```text
//! E[t+1] - E[t] + tau P_batt[t]     = 0
//! P_batt[t] + P_eng[t] - s[t]       = P_des[t]
//! P_eng[t] - P_max z[t] + c[t]      = 0
//! z[t] - z[t-1] - w[t] + h[t]       = 0
//! ```
//!
//! where `E[0]` and `z[-1]` are constants moved to the right-hand side.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::VariableMap;
use crate::error::{Error, Result};
use crate::model::{ConstraintSet, Problem};

const VARS_PER_STEP: usize = 8;
const ROWS_PER_STEP: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Engine turn-on cost.
    pub delta: f64,
    /// Weight of the terminal penalty `(E_T - E_max)^2`.
    pub eta: f64,
    pub tau: f64,
    pub p_max: f64,
    pub e_max: f64,
    pub e_0: f64,
    pub z_init: f64,
    pub demand: Vec<f64>,
}

impl VehicleParams {
    /// Default costs and limits with a synthetic demand of length `horizon`.
    pub fn new(horizon: usize, seed: u64) -> Self {
        let p_max = 1.0;
        VehicleParams {
            alpha: 1.0,
            beta: 10.0,
            gamma: 1.5,
            delta: 10.0,
            eta: 0.1,
            tau: 5.0,
            p_max,
            e_max: 200.0,
            e_0: 200.0,
            z_init: 0.0,
            demand: synthetic_demand(horizon, p_max, seed),
        }
    }

    pub fn horizon(&self) -> usize {
        self.demand.len()
    }

    pub fn validate(&self) -> Result<()> {
        let costs = [self.alpha, self.beta, self.gamma, self.delta, self.eta];
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if costs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return bad("cost coefficients must be finite and nonnegative");
        }
        if !(self.tau > 0.0 && self.p_max > 0.0 && self.e_max > 0.0) {
            return bad("tau, P_max and E_max must be positive");
        }
        if !(0.0 <= self.e_0 && self.e_0 <= self.e_max) {
            return bad("E_0 must lie in [0, E_max]");
        }
        if self.z_init != 0.0 && self.z_init != 1.0 {
            return bad("z_init must be 0 or 1");
        }
        if self.demand.is_empty() || self.demand.iter().any(|d| !d.is_finite()) {
            return bad("demand must be a nonempty finite sequence");
        }
        Ok(())
    }
}

/// Two sinusoids plus noise, clipped to `[0, 2 P_max]`.
pub fn synthetic_demand(horizon: usize, p_max: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    (0..horizon)
        .map(|t| {
            let t = t as f64;
            let slow = 0.5 * (std::f64::consts::TAU * t / 48.0).sin();
            let fast = 0.25 * (std::f64::consts::TAU * t / 11.0 + phase).sin();
            let noise: f64 = 0.15 * rng.sample::<f64, _>(StandardNormal);
            (p_max * (0.9 + slow + fast + noise)).clamp(0.0, 2.0 * p_max)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleInstance {
    pub problem: Problem,
    pub variables: VariableMap,
    /// Greedy schedule (battery first, engine at full power when the battery
    /// alone cannot cover demand); `None` if it runs the battery dry.
    pub witness: Option<DVector<f64>>,
}

pub fn gen_hybrid_vehicle(vp: &VehicleParams) -> Result<VehicleInstance> {
    vp.validate()?;
    let t_len = vp.horizon();
    let n = VARS_PER_STEP * t_len;
    let m = ROWS_PER_STEP * t_len;
    let idx = |t: usize, k: usize| VARS_PER_STEP * t + k;
    let (pb, pe, z, e, s, c, w, h) = (0, 1, 2, 3, 4, 5, 6, 7);

    let mut p = DMatrix::zeros(n, n);
    let mut q = DVector::zeros(n);
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    let mut sets = Vec::with_capacity(n);
    let mut names = Vec::with_capacity(n);

    for t in 0..t_len {
        sets.extend([
            ConstraintSet::Reals,
            ConstraintSet::interval(0.0, vp.p_max),
            ConstraintSet::binary(),
            ConstraintSet::interval(0.0, vp.e_max),
            ConstraintSet::NonnegReals,
            ConstraintSet::NonnegReals,
            ConstraintSet::NonnegReals,
            ConstraintSet::NonnegReals,
        ]);
        for group in ["P_batt", "P_eng", "z"] {
            names.push(format!("{group}[{t}]"));
        }
        names.push(format!("E[{}]", t + 1));
        for group in ["s", "c", "w", "h"] {
            names.push(format!("{group}[{t}]"));
        }

        p[(idx(t, pe), idx(t, pe))] = 2.0 * vp.alpha;
        q[idx(t, pe)] = vp.beta;
        q[idx(t, z)] = vp.gamma;
        q[idx(t, w)] = vp.delta;

        let row = ROWS_PER_STEP * t;
        a[(row, idx(t, e))] = 1.0;
        a[(row, idx(t, pb))] = vp.tau;
        if t == 0 {
            b[row] = vp.e_0;
        } else {
            a[(row, idx(t - 1, e))] = -1.0;
        }

        a[(row + 1, idx(t, pb))] = 1.0;
        a[(row + 1, idx(t, pe))] = 1.0;
        a[(row + 1, idx(t, s))] = -1.0;
        b[row + 1] = vp.demand[t];

        a[(row + 2, idx(t, pe))] = 1.0;
        a[(row + 2, idx(t, z))] = -vp.p_max;
        a[(row + 2, idx(t, c))] = 1.0;

        a[(row + 3, idx(t, z))] = 1.0;
        a[(row + 3, idx(t, w))] = -1.0;
        a[(row + 3, idx(t, h))] = 1.0;
        if t == 0 {
            b[row + 3] = vp.z_init;
        } else {
            a[(row + 3, idx(t - 1, z))] = -1.0;
        }
    }
    let last = idx(t_len - 1, e);
    p[(last, last)] = 2.0 * vp.eta;
    q[last] = -2.0 * vp.eta * vp.e_max;
    let r = vp.eta * vp.e_max * vp.e_max;

    Ok(VehicleInstance {
        problem: Problem::new(p, q, r, a, b, sets),
        variables: VariableMap::new(names),
        witness: greedy_schedule(vp),
    })
}

fn greedy_schedule(vp: &VehicleParams) -> Option<DVector<f64>> {
    let mut x = DVector::zeros(VARS_PER_STEP * vp.horizon());
    let mut energy = vp.e_0;
    let mut z_prev = vp.z_init;
    for (t, &demand) in vp.demand.iter().enumerate() {
        let on = energy - vp.tau * demand < 0.0;
        let (z, p_eng) = if on { (1.0, vp.p_max) } else { (0.0, 0.0) };
        let mut p_batt = demand - p_eng;
        if energy - vp.tau * p_batt > vp.e_max {
            p_batt = (energy - vp.e_max) / vp.tau;
        }
        let next = (energy - vp.tau * p_batt).min(vp.e_max);
        if next < 0.0 {
            return None;
        }
        let rise = z - z_prev;
        let w = rise.max(0.0);
        let base = VARS_PER_STEP * t;
        let values = [
            p_batt,
            p_eng,
            z,
            next,
            (p_batt + p_eng - demand).max(0.0),
            vp.p_max * z - p_eng,
            w,
            w - rise,
        ];
        for (k, v) in values.into_iter().enumerate() {
            x[base + k] = v;
        }
        energy = next;
        z_prev = z;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{enumerate_solve, DEFAULT_COMBINATION_CAP};

    #[test]
    fn full_battery_zero_demand_costs_nothing() {
        let mut vp = VehicleParams::new(1, 0);
        vp.delta = 0.0;
        vp.demand = vec![0.0];
        let inst = gen_hybrid_vehicle(&vp).unwrap();
        let out = enumerate_solve(&inst.problem, DEFAULT_COMBINATION_CAP).unwrap();
        let x = out.x().unwrap();
        assert!(out.objective().unwrap().abs() < 1e-9);
        assert_eq!(x[inst.variables.index("z[0]").unwrap()], 0.0);
        assert!(x[inst.variables.index("P_eng[0]").unwrap()].abs() < 1e-9);
    }

    #[test]
    fn layout_and_witness() {
        let vp = VehicleParams::new(12, 5);
        let inst = gen_hybrid_vehicle(&vp).unwrap();
        assert!(inst.problem.validate().is_ok());
        assert_eq!(inst.problem.n(), 96);
        assert_eq!(inst.problem.m(), 48);
        assert!(inst.variables.is_bijective());
        assert_eq!(inst.variables.len(), 96);
        assert_eq!(inst.variables.series("z").len(), 12);
        assert_eq!(inst.variables.index("E[12]"), Some(8 * 11 + 3));
        let x = inst.witness.unwrap();
        assert!(inst.problem.residual(&x).unwrap() <= 1e-9);
        assert_eq!(inst.problem.membership_distance(&x).unwrap(), 0.0);
    }

    #[test]
    fn witness_with_low_battery_switches_engine() {
        let mut vp = VehicleParams::new(6, 2);
        vp.e_0 = 1.0;
        vp.demand = vec![1.0; 6];
        let inst = gen_hybrid_vehicle(&vp).unwrap();
        let x = inst.witness.unwrap();
        assert_eq!(x[inst.variables.index("z[0]").unwrap()], 1.0);
        assert!(inst.problem.residual(&x).unwrap() <= 1e-9);
        assert_eq!(inst.problem.membership_distance(&x).unwrap(), 0.0);
    }

    #[test]
    fn demand_is_bounded_and_seeded() {
        let d = synthetic_demand(500, 1.0, 7);
        assert!(d.iter().all(|&v| (0.0..=2.0).contains(&v)));
        assert_eq!(d, synthetic_demand(500, 1.0, 7));
        assert_ne!(d, synthetic_demand(500, 1.0, 8));
    }

    #[test]
    fn epigraph_is_tight_at_optimum() {
        let vp = VehicleParams::new(4, 3);
        let inst = gen_hybrid_vehicle(&vp).unwrap();
        let out = enumerate_solve(&inst.problem, DEFAULT_COMBINATION_CAP).unwrap();
        let x = out.x().unwrap();
        let z = inst.variables.series("z");
        let w = inst.variables.series("w");
        for t in 0..4 {
            let prev = if t == 0 { vp.z_init } else { x[z[t - 1]] };
            assert!((x[w[t]] - (x[z[t]] - prev).max(0.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_params() {
        let mut vp = VehicleParams::new(3, 0);
        vp.e_0 = 300.0;
        assert!(gen_hybrid_vehicle(&vp).is_err());
        let mut vp = VehicleParams::new(3, 0);
        vp.z_init = 0.5;
        assert!(gen_hybrid_vehicle(&vp).is_err());
        let mut vp = VehicleParams::new(3, 0);
        vp.delta = -1.0;
        assert!(gen_hybrid_vehicle(&vp).is_err());
    }
}
