//! `failsafe-stop`: plan, compare, generate, render and benchmark from the
//! command line.
//!
//! Exit codes: 0 ok, 1 comparison failure, 2 configuration error, 3 data
//! error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use failsafe_stop::bench::{self, BenchConfig};
use failsafe_stop::direct_solver::{plan_direct_with, DirectOptions, ORACLE_REFINE};
use failsafe_stop::fast_solver::{plan_with, FastOptions};
use failsafe_stop::field::{self, GridShape, ScenarioSpec};
use failsafe_stop::kinematics::trajectory_fan;
use failsafe_stop::{Error, PenaltyField, PlanParams, PlanResult};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "failsafe-stop", version, about = "Fail-safe stopping planner over penalty fields")]
struct Cli {
    /// Worker threads for the parallel stages; parallelism is off when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pick the next valve setting for one field.
    Plan {
        #[arg(long)]
        field: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum, default_value_t = SolverArg::Fast)]
        solver: SolverArg,
        /// Write the result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both solvers and report per-candidate deviations.
    Compare {
        #[arg(long)]
        field: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        /// Column-spacing refinement of the direct solver.
        #[arg(long, default_value_t = ORACLE_REFINE)]
        refine: u32,
        /// Largest accepted relative deviation of a candidate total.
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a field file.
    Gen {
        #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
        brownian: bool,
        /// JSON scenario with moving bands and static zones.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        nt: usize,
        #[arg(long, default_value_t = 800)]
        ns: usize,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        #[arg(long, default_value_t = 0.25)]
        ds: f64,
        /// Box-filter width of the Brownian generator, in cells.
        #[arg(long, default_value_t = 8)]
        smoothness: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a PGM heat map, optionally with the failure fan of a plan.
    Render {
        #[arg(long)]
        field: PathBuf,
        /// Plan result whose `a_star` fan is drawn.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Failure times drawn per fan.
        #[arg(long, default_value_t = 6)]
        fan_samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the solvers.
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        /// Number of reference fields for the speedup suite.
        #[arg(long, default_value_t = 10)]
        fields: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Fast,
    Direct,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Speedup,
    V0,
    Scaling,
}

#[derive(Args, Clone)]
struct ParamArgs {
    #[arg(long, default_value_t = 15.0)]
    v0: f64,
    #[arg(long, default_value_t = -4.0, allow_negative_numbers = true)]
    a_prev: f64,
    #[arg(long, default_value_t = -9.0, allow_negative_numbers = true)]
    a_min: f64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    a_max: f64,
    #[arg(long, default_value_t = 0.25)]
    dt_plan: f64,
    #[arg(long, default_value_t = 10.0)]
    t_hzn: f64,
    /// Valve speed magnitude |κ| in m/s³.
    #[arg(long, default_value_t = 100.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.1)]
    da: f64,
    /// Maximum braking distance in m.
    #[arg(long)]
    s_cap: Option<f64>,
}

impl From<&ParamArgs> for PlanParams {
    fn from(a: &ParamArgs) -> Self {
        PlanParams {
            v0: a.v0,
            a_prev: a.a_prev,
            a_min: a.a_min,
            a_max: a.a_max,
            dt_plan: a.dt_plan,
            t_hzn: a.t_hzn,
            kappa_mag: a.kappa,
            da: a.da,
            s_cap: a.s_cap,
        }
    }
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }

    fn data(msg: impl Into<String>) -> Self {
        Self { code: 3, msg: msg.into() }
    }
}

/// Words in library messages and the flags they refer to.
const FLAGS: [(&str, &str); 10] = [
    ("v0", "--v0"),
    ("a_prev", "--a-prev"),
    ("a_min", "--a-min"),
    ("a_max", "--a-max"),
    ("dt_plan", "--dt-plan"),
    ("t_hzn", "--t-hzn"),
    ("valve", "--kappa"),
    ("spacing", "--da"),
    ("cap", "--s-cap"),
    ("transition", "--kappa"),
];

/// Library errors from planning: parameter problems are configuration
/// errors and name the flags involved.
fn planning_error(e: Error) -> Failure {
    match e {
        Error::Format { .. } | Error::Index { .. } | Error::Io(_) => Failure::data(e.to_string()),
        _ => {
            let msg = e.to_string();
            let words: Vec<&str> = msg.split(|c: char| !(c.is_alphanumeric() || c == '_')).collect();
            let mut flags: Vec<&str> = Vec::new();
            for (word, flag) in FLAGS {
                if words.contains(&word) && !flags.contains(&flag) {
                    flags.push(flag);
                }
            }
            if msg.contains("row spacing") {
                flags = vec!["--field", "--a-min", "--a-max", "--kappa"];
            }
            if flags.is_empty() {
                Failure::config(msg)
            } else {
                Failure::config(format!("{msg} (check {})", flags.join(", ")))
            }
        }
    }
}

fn load_field(path: &Path) -> Result<PenaltyField, Failure> {
    field::read_csv(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("result types serialise")
}

fn run_plan(
    field: &Path,
    params: &PlanParams,
    solver: SolverArg,
    parallel: bool,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let field = load_field(field)?;
    let result = match solver {
        SolverArg::Fast => plan_with(&field, params, FastOptions { parallel }),
        SolverArg::Direct => plan_direct_with(&field, params, DirectOptions { parallel, refine: 1 }),
    }
    .map_err(planning_error)?;
    if out.is_some() {
        eprintln!(
            "a* = {} m/s² ({} candidates, {:.3} ms)",
            result.a_star,
            result.evaluations.len(),
            result.timings.total() * 1e3
        );
    }
    write_output(out, &to_json(&result))
}

#[derive(Serialize)]
struct CandidateDelta {
    a_next: f64,
    fast_total: f64,
    direct_total: f64,
    delta: f64,
    relative: f64,
}

#[derive(Serialize)]
struct CompareReport {
    a_star_fast: f64,
    a_star_direct: f64,
    argmin_agrees: bool,
    max_relative_deviation: f64,
    tolerance: f64,
    direct_refine: u32,
    direct_pre_fail: Option<f64>,
    candidates: Vec<CandidateDelta>,
}

/// Totals below this are compared in absolute terms.
const NEGLIGIBLE_TOTAL: f64 = 1e-6;

fn compare(fast: &PlanResult, direct: &PlanResult, tolerance: f64, refine: u32) -> CompareReport {
    let candidates: Vec<CandidateDelta> = fast
        .evaluations
        .iter()
        .zip(&direct.evaluations)
        .map(|(f, d)| {
            let delta = f.total - d.total;
            let relative = if d.total > NEGLIGIBLE_TOTAL { delta.abs() / d.total } else { 0.0 };
            CandidateDelta { a_next: f.a_next, fast_total: f.total, direct_total: d.total, delta, relative }
        })
        .collect();
    CompareReport {
        a_star_fast: fast.a_star,
        a_star_direct: direct.a_star,
        argmin_agrees: fast.a_star == direct.a_star,
        max_relative_deviation: candidates.iter().map(|c| c.relative).fold(0.0, f64::max),
        tolerance,
        direct_refine: refine,
        direct_pre_fail: direct.pre_fail,
        candidates,
    }
}

fn run_compare(
    field: &Path,
    params: &PlanParams,
    refine: u32,
    tolerance: f64,
    parallel: bool,
    out: Option<&Path>,
) -> Result<ExitCode, Failure> {
    if refine == 0 {
        return Err(Failure::config("--refine must be at least 1"));
    }
    let field = load_field(field)?;
    let fast = plan_with(&field, params, FastOptions { parallel }).map_err(planning_error)?;
    let direct = plan_direct_with(&field, params, DirectOptions { parallel, refine }).map_err(planning_error)?;
    let report = compare(&fast, &direct, tolerance, refine);
    write_output(out, &to_json(&report))?;
    let ok = report.argmin_agrees && report.max_relative_deviation <= tolerance;
    eprintln!(
        "{}: a* fast {} direct {}, max relative deviation {:.2e}",
        if ok { "agree" } else { "disagree" },
        report.a_star_fast,
        report.a_star_direct,
        report.max_relative_deviation
    );
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run_gen(
    brownian: bool,
    scenario: Option<&Path>,
    seed: u64,
    shape: GridShape,
    smoothness: usize,
    out: &Path,
) -> Result<(), Failure> {
    let field = if brownian {
        field::generate_brownian(seed, shape, smoothness).map_err(planning_error)?
    } else {
        let path = scenario.expect("clap requires --brownian or --scenario");
        let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let spec: ScenarioSpec =
            serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        field::generate_scenario(&spec, shape).map_err(planning_error)?
    };
    field::write_csv(&field, out).map_err(|e| Failure::data(format!("{}: {e}", out.display())))
}

fn run_render(field: &Path, plan: Option<&Path>, samples: usize, out: &Path) -> Result<(), Failure> {
    let field = load_field(field)?;
    let fan = match plan {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            let result: PlanResult =
                serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            Some(trajectory_fan(&result.params, result.a_star, field.dt(), field.n_t(), samples))
        }
        None => None,
    };
    field::render_pgm(&field, fan.as_ref(), out).map_err(|e| Failure::data(format!("{}: {e}", out.display())))
}

fn run_bench(suite: Suite, cfg: &BenchConfig, n_fields: usize, out: Option<&Path>) -> Result<(), Failure> {
    let params = PlanParams::default();
    let rows = match suite {
        Suite::Speedup => {
            let fields = bench::reference_fields(n_fields.max(1), 100).map_err(planning_error)?;
            let r = bench::run_speedup(&fields, &params, cfg).map_err(planning_error)?;
            eprintln!(
                "fast worst {:.3} ms, direct worst {:.3} ms, ratio {:.3}; slowest-field medians {:.3} / {:.3} ms, ratio {:.3}",
                r.fast_worst * 1e3,
                r.direct_worst * 1e3,
                r.ratio,
                r.fast_field_worst * 1e3,
                r.direct_field_worst * 1e3,
                r.field_ratio
            );
            if r.fast_not_faster > 0 {
                eprintln!("warning: fast solver not faster in {} of {} trials", r.fast_not_faster, r.trials);
            }
            r.rows()
        }
        Suite::V0 => {
            let field = bench::sweep_field().map_err(planning_error)?;
            let v0_list = [2.0, 10.0, 20.0, 30.0, 40.0];
            let s = bench::run_v0_sweep(&field, &params, &v0_list, &[100.0, 200.0], cfg).map_err(planning_error)?;
            for (cap, n, median) in &s.top_speed {
                eprintln!("v0 = 40 m/s, cap {cap} m: {n} candidates, fast median {:.3} ms", median * 1e3);
            }
            eprintln!("truncation pays off: {}", s.truncation_pays_off());
            if !s.monotone_in_v0 {
                eprintln!("warning: fast time not monotone in v0 within 10%");
            }
            s.rows
        }
        Suite::Scaling => {
            let s = bench::run_scaling(&params, cfg).map_err(planning_error)?;
            eprintln!(
                "precompute spread {:.1}%, direct doubling {:?}, direct slope {:.2}, ds halving {:?}",
                s.precompute_spread * 100.0,
                s.direct_doubling,
                s.direct_slope,
                s.ds_halving
            );
            s.rows
        }
    };
    write_output(out, bench::rows_to_csv(&rows).trim_end())
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let parallel = match cli.threads {
        Some(0) => return Err(Failure::config("--threads must be at least 1")),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::config(format!("--threads: {e}")))?;
            true
        }
        None => false,
    };
    match cli.command {
        Command::Plan { field, params, solver, out } => {
            run_plan(&field, &PlanParams::from(&params), solver, parallel, out.as_deref())?;
        }
        Command::Compare { field, params, refine, tolerance, out } => {
            return run_compare(&field, &PlanParams::from(&params), refine, tolerance, parallel, out.as_deref());
        }
        Command::Gen { brownian, scenario, seed, nt, ns, dt, ds, smoothness, out } => {
            run_gen(brownian, scenario.as_deref(), seed, GridShape { n_t: nt, n_s: ns, dt, ds }, smoothness, &out)?;
        }
        Command::Render { field, plan, fan_samples, out } => {
            run_render(&field, plan.as_deref(), fan_samples, &out)?;
        }
        Command::Bench { suite, out, trials, warmup, fields } => {
            let cfg = BenchConfig { warmup, trials: trials.max(1), parallel };
            run_bench(suite, &cfg, fields, out.as_deref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
