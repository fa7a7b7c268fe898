//! Seeded benchmark suites. Instance `i` of a run seeded with `s` is generated
//! from seed `s + i`; rows come back in instance order.

use std::io::Write;
use std::time::{Duration, Instant};

use clap::ValueEnum;
use ncadmm::generators::{
    bit_error_rate, converter_point, gen_hybrid_vehicle, gen_power_converter, gen_random_convex_qp,
    gen_random_miqp, gen_signal_decode, ConverterParams, VehicleParams,
};
use ncadmm::kkt::solve_equality_qp;
use ncadmm::oracle::{enumerate_solve, optimality_gap, DEFAULT_COMBINATION_CAP};
use ncadmm::{relax_and_round, relative_gap, solve, Error, Preset, Problem, Result, Settings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Residual bound for candidates while iterating when polishing is on.
pub const SCREENING_TOL: f64 = 1.0;
/// Residual bound for reported points after polishing.
pub const POLISHED_TOL: f64 = 1e-9;
/// Step size for the decoding suite, about `0.75 * diag(2 H'H)` at p = 200.
pub const DECODE_RHO: f64 = 300.0;
/// Oracle subproblems are certified at this residual.
const ORACLE_FEASIBILITY: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    MiqpOracle,
    DecodeVsRlx,
    ConvexConvergence,
    Vehicle,
    Converter,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::MiqpOracle => "miqp-oracle",
            Suite::DecodeVsRlx => "decode-vs-rlx",
            Suite::ConvexConvergence => "convex-convergence",
            Suite::Vehicle => "vehicle",
            Suite::Converter => "converter",
        }
    }

    pub fn default_instances(self) -> usize {
        match self {
            Suite::MiqpOracle | Suite::ConvexConvergence => 100,
            Suite::DecodeVsRlx => 200,
            Suite::Vehicle | Suite::Converter => 10,
        }
    }

    pub fn settings(self, seed: u64) -> Settings {
        let polished = |preset| Settings {
            eps_tol: SCREENING_TOL,
            polish: true,
            polish_tol: Some(POLISHED_TOL),
            seed,
            ..Settings::preset(preset)
        };
        match self {
            Suite::MiqpOracle => polished(Preset::Miqp),
            Suite::Vehicle => polished(Preset::Vehicle),
            Suite::Converter => polished(Preset::Converter),
            Suite::DecodeVsRlx => Settings {
                rho: DECODE_RHO,
                seed,
                ..Settings::preset(Preset::Decode)
            },
            Suite::ConvexConvergence => Settings {
                iters_per_restart: 10000,
                restarts: 1,
                eps_tol: 1e-8,
                trace: true,
                seed,
                ..Settings::default()
            },
        }
    }
}

/// Equality-constrained QP with `n` in 5..=20 and `m` in 1..=n/2.
pub fn convex_instance(seed: u64) -> Result<Problem> {
    let n = 5 + (seed % 16) as usize;
    let m = 1 + ((seed / 3 % 10) as usize).min(n / 2 - 1);
    Ok(gen_random_convex_qp(n, m, seed)?.0)
}

/// Paper converter at horizon 6 with the reference phase drawn from `seed`.
pub fn converter_params(seed: u64) -> ConverterParams {
    let mut cp = ConverterParams::new(6);
    let phase = ChaCha8Rng::seed_from_u64(seed).random_range(0.0..std::f64::consts::TAU);
    let t_len = cp.horizon() as f64;
    for (t, v) in cp.v_des.iter_mut().enumerate() {
        *v = 5.0 * (std::f64::consts::TAU * t as f64 / t_len + phase).sin();
    }
    cp
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Row {
    pub instance: usize,
    pub seed: u64,
    pub feasible: bool,
    pub f_admm: Option<f64>,
    /// Oracle, exact or relax-and-round objective, depending on the suite.
    pub f_ref: Option<f64>,
    pub gap: Option<f64>,
    pub residual: Option<f64>,
    pub ber_admm: Option<f64>,
    pub ber_rlx: Option<f64>,
    pub witness_residual: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub suite: Suite,
    pub rows: Vec<Row>,
    pub summary: Vec<(&'static str, f64)>,
    pub wall: Duration,
}

impl Report {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "instance",
            "seed",
            "feasible",
            "f_admm",
            "f_ref",
            "gap",
            "residual",
            "ber_admm",
            "ber_rlx",
            "witness_residual",
            "wall_ms",
            "summary",
        ])?;
        let num = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.instance.to_string(),
                r.seed.to_string(),
                r.feasible.to_string(),
                num(r.f_admm),
                num(r.f_ref),
                num(r.gap),
                num(r.residual),
                num(r.ber_admm),
                num(r.ber_rlx),
                num(r.witness_residual),
                format!("{:.3}", r.wall_ms),
                String::new(),
            ])?;
        }
        let summary = self
            .summary
            .iter()
            .map(|(k, v)| format!("{k}={v:?}"))
            .collect::<Vec<_>>()
            .join(";");
        let mut last = vec![String::new(); 12];
        last[0] = "summary".into();
        last[10] = format!("{:.3}", self.wall.as_secs_f64() * 1e3);
        last[11] = summary;
        w.write_record(&last)?;
        w.flush()
    }
}

pub fn run(suite: Suite, instances: usize, seed: u64) -> Result<Report> {
    let start = Instant::now();
    let rows = (0..instances)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            let t = Instant::now();
            let mut row = match suite {
                Suite::MiqpOracle => miqp_row(s),
                Suite::DecodeVsRlx => decode_row(s),
                Suite::ConvexConvergence => convex_row(s),
                Suite::Vehicle => vehicle_row(s),
                Suite::Converter => converter_row(s),
            }?;
            row.instance = i;
            row.seed = s;
            row.wall_ms = t.elapsed().as_secs_f64() * 1e3;
            Ok(row)
        })
        .collect::<Result<Vec<Row>>>()?;
    let summary = summarize(suite, &rows);
    Ok(Report {
        suite,
        rows,
        summary,
        wall: start.elapsed(),
    })
}

fn fraction(rows: &[&Row], pred: impl Fn(&Row) -> bool) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| pred(r)).count() as f64 / rows.len() as f64
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::INFINITY, f64::min)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn summarize(suite: Suite, rows: &[Row]) -> Vec<(&'static str, f64)> {
    let all: Vec<&Row> = rows.iter().collect();
    let feasible: Vec<&Row> = rows.iter().filter(|r| r.feasible).collect();
    let gaps = || feasible.iter().filter_map(|r| r.gap);
    let mut out = vec![
        ("instances", rows.len() as f64),
        ("feasible_fraction", fraction(&all, |r| r.feasible)),
    ];
    match suite {
        Suite::ConvexConvergence => {
            out.push(("max_abs_gap", max_of(gaps().map(f64::abs))));
            out.push(("max_final_residual", max_of(rows.iter().filter_map(|r| r.residual))));
        }
        Suite::MiqpOracle => {
            out.push(("gap_within_0.10", fraction(&feasible, |r| r.gap.is_some_and(|g| g <= 0.10))));
            out.push(("gap_zero", fraction(&feasible, |r| r.gap.is_some_and(|g| g.abs() <= 1e-6))));
            out.push(("min_gap", min_of(gaps())));
        }
        Suite::DecodeVsRlx => {
            out.push((
                "admm_not_worse",
                fraction(&all, |r| match (r.f_admm, r.f_ref) {
                    (Some(a), Some(b)) => a <= b + 1e-9,
                    _ => false,
                }),
            ));
            out.push(("mean_ber_admm", mean(rows.iter().filter_map(|r| r.ber_admm))));
            out.push(("mean_ber_rlx", mean(rows.iter().filter_map(|r| r.ber_rlx))));
        }
        Suite::Vehicle | Suite::Converter => {
            out.push(("min_gap", min_of(gaps())));
            out.push(("max_gap", max_of(gaps())));
            out.push((
                "max_witness_residual",
                max_of(rows.iter().filter_map(|r| r.witness_residual)),
            ));
        }
    }
    out
}

/// Heuristic run compared against the enumeration oracle.
fn oracle_row(problem: &Problem, settings: &Settings) -> Result<Row> {
    let sol = solve(problem, settings)?;
    let oracle = enumerate_solve(problem, DEFAULT_COMBINATION_CAP)?;
    let mut row = Row {
        feasible: sol.found_feasible,
        f_ref: oracle.objective(),
        ..Row::default()
    };
    if let Some(x) = &sol.best_x {
        row.f_admm = Some(sol.best_objective);
        row.residual = Some(sol.best_residual);
        row.gap = Some(optimality_gap(problem, x, &oracle, ORACLE_FEASIBILITY)?);
    }
    Ok(row)
}

fn miqp_row(seed: u64) -> Result<Row> {
    let (problem, _) = gen_random_miqp(10, 3, 5, 0, seed)?;
    oracle_row(&problem, &Suite::MiqpOracle.settings(seed))
}

fn vehicle_row(seed: u64) -> Result<Row> {
    let inst = gen_hybrid_vehicle(&VehicleParams::new(4, seed))?;
    let mut row = oracle_row(&inst.problem, &Suite::Vehicle.settings(seed))?;
    row.witness_residual = match &inst.witness {
        Some(w) => Some(inst.problem.residual(w)?),
        None => None,
    };
    Ok(row)
}

fn converter_row(seed: u64) -> Result<Row> {
    let cp = converter_params(seed);
    let inst = gen_power_converter(&cp)?;
    let mut row = oracle_row(&inst.problem, &Suite::Converter.settings(seed))?;
    let idle = converter_point(&cp, &vec![0.0; cp.horizon()])?;
    row.witness_residual = Some(inst.problem.residual(&idle)?);
    Ok(row)
}

fn decode_row(seed: u64) -> Result<Row> {
    let inst = gen_signal_decode(40, 200, 8.0, seed)?;
    let settings = Suite::DecodeVsRlx.settings(seed);
    let admm = solve(&inst.problem, &settings)?;
    let rlx = relax_and_round(&inst.problem, &settings)?;
    let (Some(xa), Some(xr)) = (&admm.best_x, &rlx.best_x) else {
        return Err(Error::Infeasible("decoding run returned no point"));
    };
    let f_admm = inst.problem.objective(xa)?;
    let f_rlx = inst.problem.objective(xr)?;
    Ok(Row {
        feasible: admm.found_feasible,
        f_admm: Some(f_admm),
        f_ref: Some(f_rlx),
        gap: Some(relative_gap(f_admm, f_rlx)),
        residual: Some(admm.best_residual),
        ber_admm: Some(bit_error_rate(xa, &inst.x_true)?),
        ber_rlx: Some(bit_error_rate(xr, &inst.x_true)?),
        ..Row::default()
    })
}

fn convex_row(seed: u64) -> Result<Row> {
    let problem = convex_instance(seed)?;
    let exact = solve_equality_qp(&problem.p, &problem.q, &problem.a, &problem.b)?;
    let f_exact = problem.objective(&exact)?;
    let sol = solve(&problem, &Suite::ConvexConvergence.settings(seed))?;
    let mut row = Row {
        feasible: sol.found_feasible,
        f_ref: Some(f_exact),
        residual: sol.trace.last().map(|r| r.residual),
        ..Row::default()
    };
    if sol.found_feasible {
        row.f_admm = Some(sol.best_objective);
        row.gap = Some(sol.best_objective - f_exact);
    }
    Ok(row)
}
