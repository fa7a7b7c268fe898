use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use ncadmm::generators::{
    gen_hybrid_vehicle, gen_power_converter, gen_random_miqp, gen_signal_decode, ConverterParams,
    VehicleParams,
};
use ncadmm::{solve, PreconditionMode, Preset, Problem, Settings};
use serde_json::{json, Value};

use crate::bench::{self, Suite};
use crate::report::{write_trace, SolutionReport};
use crate::{EXIT_ERROR, EXIT_NO_FEASIBLE, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "ncadmm", version, about = "ADMM heuristic for nonconvex QPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file and print the solution as JSON.
    Solve(SolveArgs),
    /// Write an example instance and its metadata sidecar.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Run a seeded benchmark suite and write a CSV report.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Problem JSON file.
    pub problem: PathBuf,
    /// Start from a named parameter set; explicit flags override it.
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Iterations per restart.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Residual tolerance for accepted points.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Row scaling of A: none, l1 or l2.
    #[arg(long)]
    pub precondition: Option<PreconditionMode>,
    /// Refine each restart's best point with its discrete coordinates fixed.
    #[arg(long)]
    pub polish: bool,
    /// Final residual tolerance after polishing.
    #[arg(long, requires = "polish")]
    pub polish_tol: Option<f64>,
    /// Write the per-iteration trace to this CSV file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Include wall_ms in the output.
    #[arg(long)]
    pub timing: bool,
}

impl SolveArgs {
    pub fn settings(&self) -> Settings {
        let mut s = self.preset.map(Settings::preset).unwrap_or_default();
        if let Some(v) = self.rho {
            s.rho = v;
        }
        if let Some(v) = self.iters {
            s.iters_per_restart = v;
        }
        if let Some(v) = self.restarts {
            s.restarts = v;
        }
        if let Some(v) = self.tol {
            s.eps_tol = v;
        }
        if let Some(v) = self.precondition {
            s.precondition = v;
        }
        s.seed = self.seed;
        s.polish |= self.polish;
        if self.polish_tol.is_some() {
            s.polish_tol = self.polish_tol;
        }
        s.trace = self.trace.is_some();
        s
    }
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Random mixed-Boolean QP.
    Miqp {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// Number of binary coordinates.
        #[arg(long = "bool", default_value_t = 0)]
        n_bool: usize,
        /// Number of nonnegative coordinates.
        #[arg(long = "nonneg", default_value_t = 0)]
        n_nonneg: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Hybrid vehicle energy management with synthetic demand.
    Vehicle {
        #[arg(long = "T")]
        horizon: usize,
        /// Seed of the synthetic demand profile.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Switched-mode power converter control.
    Converter {
        #[arg(long = "T")]
        horizon: usize,
        /// Discretization step in seconds.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// MIMO maximum-likelihood decoding.
    Decode {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        /// Signal-to-noise ratio in dB.
        #[arg(long, default_value_t = 8.0)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Problem file to write; metadata goes next to it as `<stem>.meta.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl OutArg {
    fn path(&self, example: &str) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{example}.json")))
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub suite: Suite,
    /// CSV report path.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of instances; defaults to the suite's standard size.
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Gen(g) => cmd_gen(&g).map(|()| EXIT_OK),
        Command::Bench(b) => cmd_bench(&b).map(|()| EXIT_OK),
    });
    result.unwrap_or_else(|msg| {
        eprintln!("error: {msg}");
        EXIT_ERROR
    })
}

/// Sizes the global thread pool from `NCADMM_THREADS` (0 or unset = auto).
fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("NCADMM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| format!("NCADMM_THREADS must be a non-negative integer, got `{value}`"))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<i32, String> {
    let text = fs::read_to_string(&args.problem)
        .map_err(|e| format!("cannot read {}: {e}", args.problem.display()))?;
    let problem = Problem::from_json(&text).map_err(|e| e.to_string())?;
    let sol = solve(&problem, &args.settings()).map_err(|e| e.to_string())?;
    if let Some(path) = &args.trace {
        let file = File::create(path).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        write_trace(&sol.trace, BufWriter::new(file)).map_err(|e| e.to_string())?;
    }
    let report = SolutionReport::new(&sol, args.timing);
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
    Ok(if sol.found_feasible {
        EXIT_OK
    } else {
        EXIT_NO_FEASIBLE
    })
}

fn vector(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

fn cmd_gen(cmd: &GenCommand) -> Result<(), String> {
    let err = |e: ncadmm::Error| e.to_string();
    let (problem, meta, path) = match cmd {
        GenCommand::Miqp {
            n,
            m,
            n_bool,
            n_nonneg,
            seed,
            out,
        } => {
            let (problem, x0) = gen_random_miqp(*n, *m, *n_bool, *n_nonneg, *seed).map_err(err)?;
            let meta = json!({
                "example": "miqp",
                "n": n, "m": m, "bool": n_bool, "nonneg": n_nonneg, "seed": seed,
                "witness": vector(&x0),
            });
            (problem, meta, out.path("miqp"))
        }
        GenCommand::Vehicle { horizon, seed, out } => {
            let vp = VehicleParams::new(*horizon, *seed);
            let inst = gen_hybrid_vehicle(&vp).map_err(err)?;
            let meta = json!({
                "example": "vehicle",
                "seed": seed,
                "params": vp,
                "variables": inst.variables,
                "witness": inst.witness.as_ref().map(vector),
            });
            (inst.problem, meta, out.path("vehicle"))
        }
        GenCommand::Converter {
            horizon,
            h,
            lambda,
            mu,
            out,
        } => {
            let mut cp = ConverterParams::new(*horizon);
            cp.h = h.unwrap_or(cp.h);
            cp.lambda = lambda.unwrap_or(cp.lambda);
            cp.mu = mu.unwrap_or(cp.mu);
            let inst = gen_power_converter(&cp).map_err(err)?;
            let meta = json!({
                "example": "converter",
                "params": cp,
                "variables": inst.variables,
                "xi_ls": vector(&inst.xi_ls),
            });
            (inst.problem, meta, out.path("converter"))
        }
        GenCommand::Decode {
            n,
            p,
            snr,
            seed,
            out,
        } => {
            let inst = gen_signal_decode(*n, *p, *snr, *seed).map_err(err)?;
            let h: Vec<Vec<f64>> = inst
                .h
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect();
            let meta = json!({
                "example": "decode",
                "n": n, "p": p, "snr_db": snr, "seed": seed,
                "x_true": vector(&inst.x_true),
                "y": vector(&inst.y),
                "h": h,
            });
            (inst.problem, meta, out.path("decode"))
        }
    };
    let meta_path = sidecar_path(&path);
    write(&path, &problem.to_json())?;
    write(
        &meta_path,
        &serde_json::to_string_pretty(&meta).map_err(|e| e.to_string())?,
    )?;
    println!("{}", path.display());
    println!("{}", meta_path.display());
    Ok(())
}

/// `dir/name.json` -> `dir/name.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "problem".into());
    path.with_file_name(format!("{stem}.meta.json"))
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn cmd_bench(args: &BenchArgs) -> Result<(), String> {
    let instances = args
        .instances
        .unwrap_or_else(|| args.suite.default_instances());
    let report = bench::run(args.suite, instances, args.seed).map_err(|e| e.to_string())?;
    let file = File::create(&args.out)
        .map_err(|e| format!("cannot write {}: {e}", args.out.display()))?;
    report
        .write_csv(BufWriter::new(file))
        .map_err(|e| e.to_string())?;
    let summary = report
        .summary
        .iter()
        .map(|(k, v)| format!("{k}={v:?}"))
        .collect::<Vec<_>>()
        .join(" ");
    println!("{}: {summary}", report.suite.name());
    Ok(())
}
