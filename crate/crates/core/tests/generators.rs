use nalgebra::DVector;
use ncadmm::generators::*;
use ncadmm::oracle::{enumerate_solve, DEFAULT_COMBINATION_CAP};
use ncadmm::{solve, ConstraintSet, Problem, Settings};

fn assignments(values: &[f64], len: usize) -> Vec<Vec<f64>> {
    (0..values.len().pow(len as u32))
        .map(|mut k| {
            let mut out = vec![0.0; len];
            for slot in out.iter_mut().rev() {
                *slot = values[k % values.len()];
                k /= values.len();
            }
            out
        })
        .collect()
}

#[test]
fn converter_oracle_matches_switch_pattern_enumeration() {
    let cp = ConverterParams::new(6);
    let inst = gen_power_converter(&cp).unwrap();
    let p = &inst.problem;
    let mut best = f64::INFINITY;
    for u in assignments(&[-1.0, 0.0, 1.0], 6) {
        let x = converter_point(&cp, &u).unwrap();
        assert!(p.residual(&x).unwrap() <= 1e-9);
        assert_eq!(p.membership_distance(&x).unwrap(), 0.0);
        best = best.min(p.objective(&x).unwrap());
    }
    let oracle = enumerate_solve(p, DEFAULT_COMBINATION_CAP).unwrap();
    let f = oracle.objective().unwrap();
    assert!((f - best).abs() <= 1e-6 * (1.0 + best.abs()), "{f} vs {best}");
}

/// Freezes every binary coordinate of `problem` at the given values.
fn freeze(problem: &Problem, values: &[f64]) -> Problem {
    let mut frozen = problem.clone();
    let mut it = values.iter();
    for s in frozen.sets.iter_mut() {
        if *s == ConstraintSet::binary() {
            *s = ConstraintSet::fixed(*it.next().unwrap());
        }
    }
    frozen
}

#[test]
fn vehicle_oracle_matches_engine_schedule_enumeration() {
    let inst = gen_hybrid_vehicle(&VehicleParams::new(4, 0)).unwrap();
    let p = &inst.problem;
    let settings = Settings {
        rho: 2.0,
        iters_per_restart: 20000,
        restarts: 1,
        eps_tol: 1e-7,
        ..Settings::default()
    };
    let best = assignments(&[0.0, 1.0], 4)
        .iter()
        .filter_map(|z| {
            let sol = solve(&freeze(p, z), &settings).unwrap();
            sol.found_feasible.then_some(sol.best_objective)
        })
        .fold(f64::INFINITY, f64::min);
    let f = enumerate_solve(p, DEFAULT_COMBINATION_CAP).unwrap().objective().unwrap();
    assert!((f - best).abs() <= 1e-4 * (1.0 + f.abs()), "{f} vs {best}");
}

#[test]
fn vehicle_witnesses_are_feasible() {
    for (t, seed) in [(4, 0), (12, 1), (48, 2)] {
        let inst = gen_hybrid_vehicle(&VehicleParams::new(t, seed)).unwrap();
        let x = inst.witness.unwrap();
        assert!(inst.problem.residual(&x).unwrap() <= 1e-9);
        assert_eq!(inst.problem.membership_distance(&x).unwrap(), 0.0);
        assert!(inst.variables.is_bijective());
        assert_eq!(inst.variables.len(), inst.problem.n());
    }
}

#[test]
fn instances_survive_json_round_trip() {
    let problems = vec![
        gen_random_miqp(10, 3, 5, 2, 1).unwrap().0,
        gen_hybrid_vehicle(&VehicleParams::new(4, 0)).unwrap().problem,
        gen_power_converter(&ConverterParams::new(6)).unwrap().problem,
        gen_signal_decode(6, 12, 8.0, 2).unwrap().problem,
    ];
    for p in problems {
        assert!(p.validate().is_ok());
        assert_eq!(Problem::from_json(&p.to_json()).unwrap(), p);
    }
}

#[test]
fn decode_objective_is_the_squared_misfit() {
    let inst = gen_signal_decode(8, 30, 8.0, 5).unwrap();
    assert!(inst.x_true.iter().all(|v| CONSTELLATION.contains(v)));
    for k in 0..20 {
        let x = DVector::from_fn(8, |i, _| CONSTELLATION[(i * 7 + k) % 4]);
        let direct = (&inst.h * &x - &inst.y).norm_squared();
        assert!((inst.problem.objective(&x).unwrap() - direct).abs() <= 1e-9 * (1.0 + direct));
    }
}
