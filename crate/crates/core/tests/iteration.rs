//! The scaled KKT iteration against a direct transcription of the unscaled
//! three-step update, solved with a dense LU.

use nalgebra::{DMatrix, DVector};
use ncadmm::admm::{iterate, AdmmContext, IterState};
use ncadmm::generators::gen_random_miqp;
use ncadmm::kkt::KktFactorization;
use ncadmm::precondition::{compute_scaling, PreconditionMode};
use ncadmm::projection::project;
use ncadmm::{DualUpdate, Problem};

struct Reference {
    x: DVector<f64>,
    u: DVector<f64>,
}

/// x+ = argmin (1/2)x'Px + q'x + (rho/2)||[A; I]x - [0; I]x^k - [b; 0] + u||^2
fn reference_step(p: &Problem, rho: f64, s: &mut Reference) {
    let (n, m) = (p.n(), p.m());
    let at = p.a.transpose();
    let lhs = &p.p + DMatrix::identity(n, n) * rho + &at * &p.a * rho;
    let u1 = s.u.rows(0, m).into_owned();
    let u2 = s.u.rows(m, n).into_owned();
    let rhs = -&p.q + (&at * (&p.b - &u1) + &s.x - &u2) * rho;
    let x_half = lhs.lu().solve(&rhs).unwrap();
    let x_next = project(&p.sets, &(&x_half + &u2)).unwrap();
    let mut u = s.u.clone();
    let r1 = &p.a * &x_half - &p.b;
    u.rows_mut(0, m).add_assign(&r1);
    let r2 = &x_half - &x_next;
    u.rows_mut(m, n).add_assign(&r2);
    s.x = x_next;
    s.u = u;
}

trait AddAssign {
    fn add_assign(&mut self, other: &DVector<f64>);
}

impl AddAssign for nalgebra::DVectorViewMut<'_, f64> {
    fn add_assign(&mut self, other: &DVector<f64>) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }
}

fn max_iterate_gap(problem: &Problem, rho: f64, steps: usize) -> f64 {
    let scaling = compute_scaling(problem, PreconditionMode::None);
    let fac = KktFactorization::build(&problem.p, &problem.a, &scaling, rho).unwrap();
    let ctx = AdmmContext::new(problem, &scaling, &fac, rho).unwrap();
    let x0 = DVector::from_fn(problem.n(), |i, _| 0.3 + 0.1 * i as f64);
    let mut state = IterState::new(x0.clone(), problem.m());
    let mut reference = Reference {
        x: x0,
        u: DVector::zeros(problem.n() + problem.m()),
    };
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        iterate(&mut state, &ctx, DualUpdate::Standard).unwrap();
        reference_step(problem, rho, &mut reference);
        let scale = 1.0 + reference.x.amax() + reference.u.amax();
        worst = worst
            .max((&state.x - &reference.x).amax() / scale)
            .max((&state.u - &reference.u).amax() / scale);
    }
    worst
}

#[test]
fn unscaled_iterates_match_reference_on_reals() {
    let (p, _) = gen_random_miqp(12, 4, 0, 0, 5).unwrap();
    assert!(max_iterate_gap(&p, 1.3, 20) <= 1e-12);
}

#[test]
fn unscaled_iterates_match_reference_with_binaries() {
    for seed in 0..5 {
        let (p, _) = gen_random_miqp(10, 3, 5, 2, seed).unwrap();
        assert!(max_iterate_gap(&p, 0.5, 20) <= 1e-12, "seed {seed}");
    }
}

#[test]
fn iterates_stay_in_the_sets() {
    let (p, _) = gen_random_miqp(10, 3, 4, 3, 2).unwrap();
    let scaling = compute_scaling(&p, PreconditionMode::RowL2);
    let fac = KktFactorization::build(&p.p, &p.a, &scaling, 0.7).unwrap();
    let ctx = AdmmContext::new(&p, &scaling, &fac, 0.7).unwrap();
    let mut state = IterState::new(DVector::from_element(10, 0.5), 3);
    for _ in 0..100 {
        iterate(&mut state, &ctx, DualUpdate::Standard).unwrap();
        assert_eq!(p.membership_distance(&state.x).unwrap(), 0.0);
    }
}

#[test]
fn l2_scaled_rows_have_unit_norm() {
    for seed in 0..50 {
        let (mut p, _) = gen_random_miqp(8 + seed as usize % 10, 5, 2, 2, seed).unwrap();
        p.a.row_mut(seed as usize % 5).fill(0.0);
        p.a.row_mut(1).scale_mut(1e4 * (seed as f64 + 1.0));
        let s = compute_scaling(&p, PreconditionMode::RowL2);
        for (i, row) in s.scale_rows(&p.a).row_iter().enumerate() {
            if p.a.row(i).iter().all(|v| *v == 0.0) {
                assert_eq!(s.e[i], 1.0);
            } else {
                assert!((row.norm() - 1.0).abs() <= 1e-12, "seed {seed} row {i}");
            }
        }
    }
}
