//! Multi-start nonconvex ADMM.
//!
//! Each iteration performs the three scaled updates
//!
//! ```text
//!   x^{k+1/2} = [I 0] K^{-1} [ -q + rho (F^2 x^k + A'E^2 b - [A'E  F] u^k) ; 0 ]
//!   x^{k+1}   = Pi(x^{k+1/2} + [0 F^{-1}] u^k)
//!   u^{k+1}   = u^k + [EA; F] x^{k+1/2} - [0; F] x^{k+1} - [Eb; 0]
//! ```
//!
//! with `K = [P + rho F^2, A'E; EA, -I/rho]` factored once. Every projected
//! iterate lies in `X`; the best one that also satisfies `||Ax - b|| <= eps_tol`
//! is kept across all iterations and restarts.

mod convex;
mod polish;
mod settings;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kkt::{assemble, Fingerprint, KktFactorization};
use crate::model::Problem;
use crate::precondition::{compute_scaling, Scaling};
use crate::projection::sample_hull;

pub use convex::{ConvexOptions, ConvexOutcome, ConvexSolver};
pub(crate) use convex::FixedReduction;
pub use polish::{polish, relax_and_round};
pub use settings::{DualUpdate, Preset, Settings};

/// Current iterate of one restart.
#[derive(Debug, Clone)]
pub struct IterState {
    /// Projected iterate, always in `X`.
    pub x: DVector<f64>,
    /// Scaled dual, `m` constraint rows followed by `n` consensus rows.
    pub u: DVector<f64>,
    /// Iterate before projection.
    pub x_half: DVector<f64>,
    rhs: Vec<f64>,
    prev: DVector<f64>,
    tmp: DVector<f64>,
}

impl IterState {
    pub fn new(x0: DVector<f64>, m: usize) -> Self {
        let n = x0.len();
        IterState {
            u: DVector::zeros(m + n),
            x_half: x0.clone(),
            rhs: vec![0.0; n + m],
            prev: x0.clone(),
            tmp: DVector::zeros(m),
            x: x0,
        }
    }
}

/// Problem data prepared for the scaled iteration: `EA`, `Eb`, `F`, and the
/// cached factorization.
pub struct AdmmContext<'a> {
    problem: &'a Problem,
    fac: &'a KktFactorization,
    rho: f64,
    ea: DMatrix<f64>,
    eb: DVector<f64>,
    f: DVector<f64>,
    f2: DVector<f64>,
}

impl<'a> AdmmContext<'a> {
    /// Checks that `fac` was computed from this problem's `(P, A)`, `scaling`
    /// and `rho`.
    pub fn new(
        problem: &'a Problem,
        scaling: &Scaling,
        fac: &'a KktFactorization,
        rho: f64,
    ) -> Result<Self> {
        let k = assemble(&problem.p, &problem.a, scaling, rho)?;
        if Fingerprint::of_matrix(&k) != fac.fingerprint() {
            return Err(Error::StaleFactorization);
        }
        Ok(Self::trusted(problem, scaling, fac, rho))
    }

    fn trusted(
        problem: &'a Problem,
        scaling: &Scaling,
        fac: &'a KktFactorization,
        rho: f64,
    ) -> Self {
        let ea = scaling.scale_rows(&problem.a);
        let eb = problem.b.component_mul(&scaling.e);
        AdmmContext {
            problem,
            fac,
            rho,
            ea,
            eb,
            f: scaling.f.clone(),
            f2: scaling.f.component_mul(&scaling.f),
        }
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }
}

/// One application of the three scaled updates, in place.
pub fn iterate(state: &mut IterState, ctx: &AdmmContext<'_>, mode: DualUpdate) -> Result<()> {
    let p = ctx.problem;
    let (n, m) = (p.n(), p.m());
    if state.x.len() != n || state.u.len() != n + m {
        return Err(Error::DimensionMismatch {
            what: "iterate state",
            expected: n + m,
            got: state.u.len(),
        });
    }
    let rho = ctx.rho;

    // top block: -q + rho (F^2 x + (EA)'(Eb - u_1) - F u_2)
    let mut top = DVector::zeros(n);
    if m > 0 {
        state.tmp.copy_from(&ctx.eb);
        state.tmp -= state.u.rows(0, m);
        top.gemv_tr(1.0, &ctx.ea, &state.tmp, 0.0);
    }
    for i in 0..n {
        state.rhs[i] = -p.q[i]
            + rho * (ctx.f2[i] * state.x[i] + top[i] - ctx.f[i] * state.u[m + i]);
    }
    state.rhs[n..].fill(0.0);
    ctx.fac.solve_in_place(&mut state.rhs)?;
    state.x_half.copy_from_slice(&state.rhs[..n]);
    if state.x_half.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged);
    }

    std::mem::swap(&mut state.prev, &mut state.x);
    for i in 0..n {
        state.x[i] = p.sets[i].project(state.x_half[i] + state.u[m + i] / ctx.f[i]);
    }

    if m > 0 {
        state.tmp.gemv(1.0, &ctx.ea, &state.x_half, 0.0);
        state.tmp -= &ctx.eb;
        let mut u1 = state.u.rows_mut(0, m);
        u1 += &state.tmp;
    }
    let consensus = match mode {
        DualUpdate::Standard => &state.x,
        DualUpdate::Literal => &state.prev,
    };
    for i in 0..n {
        state.u[m + i] += ctx.f[i] * (state.x_half[i] - consensus[i]);
    }
    Ok(())
}

/// A projected iterate with its unscaled objective and residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: DVector<f64>,
    pub objective: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub restart: usize,
    pub k: usize,
    /// Objective at the projected iterate.
    pub objective: f64,
    pub residual: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub best: Option<Candidate>,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    /// Set when the restart was aborted.
    pub failure: Option<Error>,
}

/// Runs `settings.iters_per_restart` iterations from `(x0, u = 0)` and keeps
/// the best feasible projected iterate. There is no early termination.
pub fn run_single(
    ctx: &AdmmContext<'_>,
    settings: &Settings,
    x0: DVector<f64>,
    restart: usize,
) -> RestartOutcome {
    let problem = ctx.problem;
    let mut state = IterState::new(x0, problem.m());
    let mut best: Option<Candidate> = None;
    let mut trace = Vec::new();
    let mut ax = DVector::zeros(problem.m());
    for k in 0..settings.iters_per_restart {
        if let Err(e) = iterate(&mut state, ctx, settings.dual_update) {
            return RestartOutcome {
                best,
                trace,
                iterations: k,
                failure: Some(e),
            };
        }
        let residual = if problem.m() == 0 {
            0.0
        } else {
            ax.gemv(1.0, &problem.a, &state.x, 0.0);
            ax -= &problem.b;
            ax.norm()
        };
        let best_objective = best.as_ref().map_or(f64::INFINITY, |c| c.objective);
        let feasible = residual <= settings.eps_tol;
        let objective = if feasible || settings.trace {
            objective_of(problem, &state.x)
        } else {
            f64::NAN
        };
        if feasible && objective < best_objective {
            best = Some(Candidate {
                x: state.x.clone(),
                objective,
                residual,
            });
        }
        if settings.trace {
            trace.push(TraceRow {
                restart,
                k,
                objective,
                residual,
                best_so_far: best.as_ref().map_or(f64::INFINITY, |c| c.objective),
            });
        }
    }
    RestartOutcome {
        best,
        trace,
        iterations: settings.iters_per_restart,
        failure: None,
    }
}

fn objective_of(problem: &Problem, x: &DVector<f64>) -> f64 {
    problem.objective(x).expect("iterate has problem dimension")
}

/// Deterministic generator for restart `index` of a run seeded with `seed`.
pub fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub restarts: usize,
    pub failed_restarts: usize,
    pub iterations: usize,
    /// Factorizations performed by this call; zero on a cache hit.
    pub factorizations: u64,
    pub cache_hit: bool,
    pub polished: bool,
    /// Scaling, KKT assembly and factorization.
    pub setup_time: Duration,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub best_x: Option<DVector<f64>>,
    /// `+inf` when no feasible point was found.
    pub best_objective: f64,
    pub best_residual: f64,
    pub found_feasible: bool,
    pub trace: Vec<TraceRow>,
    pub stats: SolveStats,
}

impl Solution {
    fn empty() -> Self {
        Solution {
            best_x: None,
            best_objective: f64::INFINITY,
            best_residual: f64::INFINITY,
            found_feasible: false,
            trace: Vec::new(),
            stats: SolveStats::default(),
        }
    }
}

struct CachedSetup {
    fingerprint: Fingerprint,
    p_fingerprint: Fingerprint,
    scaling: Scaling,
    fac: KktFactorization,
}

/// Heuristic solver that keeps the scaling and KKT factorization between
/// calls, so a sequence of problems sharing `P`, `A` and `rho` factors once.
#[derive(Default)]
pub struct Solver {
    cache: Option<CachedSetup>,
    factorizations: u64,
}

impl Solver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total factorizations performed by this solver.
    pub fn factorizations(&self) -> u64 {
        self.factorizations
    }

    fn validate(&self, problem: &Problem) -> Result<()> {
        let p_fp = Fingerprint::of_matrix(&problem.p);
        let known_psd = self
            .cache
            .as_ref()
            .is_some_and(|c| c.p_fingerprint == p_fp);
        problem
            .validate_impl(!known_psd)
            .map_err(Error::InvalidProblem)
    }

    /// Scaling and factorization for `problem`, reused when `(P, A, rho)` and
    /// the scaling mode produce the same KKT matrix as last time.
    fn prepare(&mut self, problem: &Problem, settings: &Settings) -> Result<bool> {
        let scaling = compute_scaling(problem, settings.precondition);
        let k = assemble(&problem.p, &problem.a, &scaling, settings.rho)?;
        let fingerprint = Fingerprint::of_matrix(&k);
        if self
            .cache
            .as_ref()
            .is_some_and(|c| c.fingerprint == fingerprint)
        {
            return Ok(true);
        }
        self.cache = None;
        let fac = KktFactorization::factor(&k, problem.n(), problem.m())?;
        self.factorizations += 1;
        self.cache = Some(CachedSetup {
            fingerprint,
            p_fingerprint: Fingerprint::of_matrix(&problem.p),
            scaling,
            fac,
        });
        Ok(false)
    }

    /// Multi-start run. With `polish` set, each restart's best point is
    /// polished and must then meet `settings.acceptance_tol()`.
    pub fn solve(&mut self, problem: &Problem, settings: &Settings) -> Result<Solution> {
        let start = Instant::now();
        settings.validate()?;
        self.validate(problem)?;

        let setup_start = Instant::now();
        let hit = self.prepare(problem, settings)?;
        let setup_time = setup_start.elapsed();
        let setup = self.cache.as_ref().expect("prepared");
        let ctx = AdmmContext::trusted(problem, &setup.scaling, &setup.fac, settings.rho);

        let run = |r: usize| {
            let mut rng = restart_rng(settings.seed, r);
            let x0 = sample_hull(&problem.sets, &mut rng);
            run_single(&ctx, settings, x0, r)
        };
        let outcomes: Vec<RestartOutcome> = if settings.restarts > 1 {
            (0..settings.restarts).into_par_iter().map(run).collect()
        } else {
            (0..settings.restarts).map(run).collect()
        };

        let final_tol = settings.acceptance_tol();
        let mut solution = Solution::empty();
        let mut candidates = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            solution.stats.iterations += outcome.iterations;
            if outcome.failure.is_some() {
                solution.stats.failed_restarts += 1;
            }
            candidates.push(outcome.best);
            solution.trace.extend(outcome.trace);
        }
        let mut running = f64::INFINITY;
        for row in &mut solution.trace {
            if row.residual <= settings.eps_tol && row.objective < running {
                running = row.objective;
            }
            row.best_so_far = running;
        }

        let refine = |c: Candidate| -> Result<(Candidate, bool)> {
            if !settings.polish {
                return Ok((c, false));
            }
            let polished = polish(problem, &c.x, final_tol);
            if polished == c.x {
                return Ok((c, false));
            }
            Ok((
                Candidate {
                    objective: problem.objective(&polished)?,
                    residual: problem.residual(&polished)?,
                    x: polished,
                },
                true,
            ))
        };
        let refined: Vec<Option<(Candidate, bool)>> = if settings.polish && candidates.len() > 1 {
            candidates
                .into_par_iter()
                .map(|c| c.map(refine).transpose())
                .collect::<Result<_>>()?
        } else {
            candidates
                .into_iter()
                .map(|c| c.map(refine).transpose())
                .collect::<Result<_>>()?
        };
        let mut best: Option<(Candidate, bool)> = None;
        for (c, polished) in refined.into_iter().flatten() {
            if c.residual > final_tol {
                continue;
            }
            if best.as_ref().is_none_or(|(b, _)| c.objective < b.objective) {
                best = Some((c, polished));
            }
        }
        if let Some((c, polished)) = best {
            solution.stats.polished = polished;
            solution.best_objective = c.objective;
            solution.best_residual = c.residual;
            solution.best_x = Some(c.x);
            solution.found_feasible = true;
        }

        solution.stats.restarts = settings.restarts;
        solution.stats.factorizations = if hit { 0 } else { 1 };
        solution.stats.cache_hit = hit;
        solution.stats.setup_time = setup_time;
        solution.stats.wall_time = start.elapsed();
        Ok(solution)
    }
}

/// Multi-start heuristic with a fresh solver.
pub fn solve(problem: &Problem, settings: &Settings) -> Result<Solution> {
    Solver::new().solve(problem, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConstraintSet;
    use crate::precondition::PreconditionMode;
    use nalgebra::{dmatrix, dvector};

    fn context_parts(problem: &Problem, mode: PreconditionMode, rho: f64) -> (Scaling, KktFactorization) {
        let s = compute_scaling(problem, mode);
        let f = KktFactorization::build(&problem.p, &problem.a, &s, rho).unwrap();
        (s, f)
    }

    #[test]
    fn scalar_iteration_by_hand() {
        let p = Problem::unconstrained(dmatrix![1.0], dvector![0.0], 0.0, vec![ConstraintSet::Reals]);
        let (s, f) = context_parts(&p, PreconditionMode::None, 1.0);
        let ctx = AdmmContext::new(&p, &s, &f, 1.0).unwrap();
        let mut st = IterState::new(dvector![2.0], 0);
        iterate(&mut st, &ctx, DualUpdate::Standard).unwrap();
        assert_eq!(st.x_half, dvector![1.0]);
        assert_eq!(st.x, dvector![1.0]);
        assert_eq!(st.u, dvector![0.0]);
    }

    #[test]
    fn stale_factorization_is_rejected() {
        let p = Problem::unconstrained(dmatrix![1.0], dvector![0.0], 0.0, vec![ConstraintSet::Reals]);
        let (s, f) = context_parts(&p, PreconditionMode::None, 1.0);
        assert!(matches!(
            AdmmContext::new(&p, &s, &f, 2.0),
            Err(Error::StaleFactorization)
        ));
    }

    #[test]
    fn infeasible_restart_finds_nothing() {
        let p = Problem::new(
            dmatrix![1.0],
            dvector![0.0],
            0.0,
            dmatrix![1.0],
            dvector![2.0],
            vec![ConstraintSet::interval(0.0, 1.0)],
        );
        let settings = Settings::default();
        let sol = solve(&p, &settings).unwrap();
        assert!(!sol.found_feasible);
        assert!(sol.best_x.is_none());
        assert_eq!(sol.best_objective, f64::INFINITY);
    }

    #[test]
    fn fixed_point_start_is_kept() {
        // min (x1 - 1)^2 + (x2)^2 over binaries with x1 + x2 = 1: optimum (1, 0)
        let p = Problem::new(
            dmatrix![2.0, 0.0; 0.0, 2.0],
            dvector![-2.0, 0.0],
            1.0,
            dmatrix![1.0, 1.0],
            dvector![1.0],
            vec![ConstraintSet::binary(), ConstraintSet::binary()],
        );
        let settings = Settings {
            rho: 1.0,
            iters_per_restart: 50,
            ..Settings::default()
        };
        let s = compute_scaling(&p, settings.precondition);
        let f = KktFactorization::build(&p.p, &p.a, &s, settings.rho).unwrap();
        let ctx = AdmmContext::new(&p, &s, &f, settings.rho).unwrap();
        let out = run_single(&ctx, &settings, dvector![1.0, 0.0], 0);
        let best = out.best.unwrap();
        assert_eq!(best.x, dvector![1.0, 0.0]);
        assert_eq!(best.objective, 0.0);
    }

    #[test]
    fn invalid_problem_is_an_error() {
        let p = Problem::unconstrained(dmatrix![0.0, 1.0; 1.0, 0.0], dvector![0.0, 0.0], 0.0, vec![ConstraintSet::Reals; 2]);
        assert!(matches!(solve(&p, &Settings::default()), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn trace_best_so_far_is_monotone() {
        let p = Problem::new(
            dmatrix![2.0, 0.5, 0.0; 0.5, 1.0, 0.0; 0.0, 0.0, 1.0],
            dvector![-1.0, 0.3, 0.2],
            0.0,
            dmatrix![1.0, 1.0, 1.0],
            dvector![1.5],
            vec![ConstraintSet::binary(), ConstraintSet::binary(), ConstraintSet::Reals],
        );
        let settings = Settings {
            trace: true,
            restarts: 4,
            iters_per_restart: 30,
            ..Settings::default()
        };
        let sol = solve(&p, &settings).unwrap();
        assert_eq!(sol.trace.len(), 120);
        for w in sol.trace.windows(2) {
            assert!(w[1].best_so_far <= w[0].best_so_far);
        }
        assert_eq!(sol.trace.last().unwrap().best_so_far, sol.best_objective);
    }

    #[test]
    fn cache_reuses_factorization() {
        let mut p = Problem::new(
            dmatrix![2.0, 0.0; 0.0, 1.0],
            dvector![1.0, 1.0],
            0.0,
            dmatrix![1.0, 1.0],
            dvector![1.0],
            vec![ConstraintSet::Reals, ConstraintSet::binary()],
        );
        let mut solver = Solver::new();
        let settings = Settings::default();
        let a = solver.solve(&p, &settings).unwrap();
        p.q = dvector![-1.0, 3.0];
        p.b = dvector![2.0];
        let b = solver.solve(&p, &settings).unwrap();
        assert_eq!(solver.factorizations(), 1);
        assert!(!a.stats.cache_hit && b.stats.cache_hit);
        p.a = dmatrix![1.0, 2.0];
        let c = solver.solve(&p, &settings).unwrap();
        assert!(!c.stats.cache_hit);
        assert_eq!(solver.factorizations(), 2);
    }
}
