//! Wall-clock comparison of the two solvers.
//!
//! Every measurement is repeated after warm-up runs; worst case and median
//! are reported. Solvers run single-threaded unless `parallel` is set.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::direct_solver::{plan_direct_with, DirectOptions};
use crate::error::Result;
use crate::fast_solver::{plan_with, precompute_with, FastOptions};
use crate::field::{generate_brownian, GridShape, PenaltyField};
use crate::kinematics::PlanParams;
use crate::plan::{candidate_set, PlanResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub warmup: usize,
    pub trials: usize,
    /// Use the rayon pool inside the solvers.
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { warmup: 3, trials: 10, parallel: false }
    }
}

/// Worst case and median of a set of timings, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub worst: f64,
    pub median: f64,
}

impl Stats {
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(!samples.is_empty());
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Self { worst: v[n - 1], median }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    /// Slowest single trial after warm-up.
    pub fast_worst: f64,
    pub direct_worst: f64,
    pub fast_median: f64,
    pub direct_median: f64,
    /// Slowest field, each field timed by its median over the trials.
    pub fast_field_worst: f64,
    pub direct_field_worst: f64,
    /// `fast_worst / direct_worst`.
    pub ratio: f64,
    /// `fast_field_worst / direct_field_worst`.
    pub field_ratio: f64,
    pub trials: usize,
    /// Trials where the fast solver was not faster.
    pub fast_not_faster: usize,
    pub params: PlanParams,
}

/// One line of the CSV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: String,
    pub solver: String,
    pub stage: String,
    pub v0: f64,
    pub cap: Option<f64>,
    pub n_candidates: usize,
    pub ds: f64,
    pub worst_s: f64,
    pub median_s: f64,
}

impl BenchRow {
    fn new(scenario: &str, solver: &str, stage: &str, params: &PlanParams, n: usize, ds: f64, s: Stats) -> Self {
        Self {
            scenario: scenario.into(),
            solver: solver.into(),
            stage: stage.into(),
            v0: params.v0,
            cap: params.s_cap,
            n_candidates: n,
            ds,
            worst_s: s.worst,
            median_s: s.median,
        }
    }
}

pub const CSV_HEADER: &str = "scenario,solver,stage,v0,cap,n_candidates,ds,worst_s,median_s";

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let cap = r.cap.map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.9},{:.9}",
            r.scenario, r.solver, r.stage, r.v0, cap, r.n_candidates, r.ds, r.worst_s, r.median_s
        );
    }
    out
}

fn seconds<T>(f: impl FnOnce() -> Result<T>) -> Result<f64> {
    let start = Instant::now();
    f()?;
    Ok(start.elapsed().as_secs_f64())
}

fn fast(field: &PenaltyField, params: &PlanParams, cfg: &BenchConfig) -> Result<PlanResult> {
    plan_with(field, params, FastOptions { parallel: cfg.parallel })
}

fn direct(field: &PenaltyField, params: &PlanParams, cfg: &BenchConfig) -> Result<PlanResult> {
    plan_direct_with(field, params, DirectOptions { parallel: cfg.parallel, refine: 1 })
}

/// Reference-size Brownian fields: 100 rows of 0.1 s, 800 columns of 0.25 m.
pub fn reference_fields(count: usize, first_seed: u64) -> Result<Vec<PenaltyField>> {
    let shape = GridShape { n_t: 100, n_s: 800, dt: 0.1, ds: 0.25 };
    (0..count as u64).map(|k| generate_brownian(first_seed + k, shape, 8)).collect()
}

/// Times both solvers on every field, `cfg.trials` times each, after
/// `cfg.warmup` runs per field.
pub fn run_speedup(fields: &[PenaltyField], params: &PlanParams, cfg: &BenchConfig) -> Result<BenchReport> {
    assert!(!fields.is_empty());
    let (mut tf, mut td) = (Vec::new(), Vec::new());
    let (mut per_fast, mut per_direct) = (Vec::new(), Vec::new());
    let mut fast_not_faster = 0;
    for f in fields {
        for _ in 0..cfg.warmup {
            fast(f, params, cfg)?;
            direct(f, params, cfg)?;
        }
        let (mut a_runs, mut b_runs) = (Vec::new(), Vec::new());
        for _ in 0..cfg.trials {
            let a = seconds(|| fast(f, params, cfg))?;
            let b = seconds(|| direct(f, params, cfg))?;
            if a >= b {
                fast_not_faster += 1;
            }
            a_runs.push(a);
            b_runs.push(b);
        }
        per_fast.push(Stats::from_samples(&a_runs).median);
        per_direct.push(Stats::from_samples(&b_runs).median);
        tf.extend(a_runs);
        td.extend(b_runs);
    }
    let (sf, sd) = (Stats::from_samples(&tf), Stats::from_samples(&td));
    let fast_field_worst = Stats::from_samples(&per_fast).worst;
    let direct_field_worst = Stats::from_samples(&per_direct).worst;
    Ok(BenchReport {
        scenario: "speedup".into(),
        fast_worst: sf.worst,
        direct_worst: sd.worst,
        fast_median: sf.median,
        direct_median: sd.median,
        fast_field_worst,
        direct_field_worst,
        ratio: sf.worst / sd.worst,
        field_ratio: fast_field_worst / direct_field_worst,
        trials: tf.len(),
        fast_not_faster,
        params: *params,
    })
}

impl BenchReport {
    pub fn rows(&self) -> Vec<BenchRow> {
        let n = candidate_set(&self.params).map(|c| c.len()).unwrap_or(0);
        let f = Stats { worst: self.fast_worst, median: self.fast_median };
        let d = Stats { worst: self.direct_worst, median: self.direct_median };
        vec![
            BenchRow::new(&self.scenario, "fast", "total", &self.params, n, 0.25, f),
            BenchRow::new(&self.scenario, "direct", "total", &self.params, n, 0.25, d),
        ]
    }
}

/// Interleaved timing of several closures: each trial runs every closure
/// once, so slow drifts of the machine affect all of them alike.
fn interleaved(cfg: &BenchConfig, jobs: &mut [&mut dyn FnMut() -> Result<()>]) -> Result<Vec<Stats>> {
    for _ in 0..cfg.warmup {
        for job in jobs.iter_mut() {
            job()?;
        }
    }
    let mut samples = vec![Vec::with_capacity(cfg.trials); jobs.len()];
    for _ in 0..cfg.trials {
        for (k, job) in jobs.iter_mut().enumerate() {
            let start = Instant::now();
            job()?;
            samples[k].push(start.elapsed().as_secs_f64());
        }
    }
    Ok(samples.iter().map(|s| Stats::from_samples(s)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct V0Sweep {
    pub rows: Vec<BenchRow>,
    /// Candidate counts and median fast-solver times at the highest speed,
    /// per cap in the order given.
    pub top_speed: Vec<(f64, usize, f64)>,
    /// Soft check: fast time non-decreasing in `v0` at fixed cap (10% slack).
    pub monotone_in_v0: bool,
}

impl V0Sweep {
    /// The smaller cap leaves fewer candidates and a faster solve at the
    /// highest speed.
    pub fn truncation_pays_off(&self) -> bool {
        self.top_speed.windows(2).all(|w| {
            let (small, large) = if w[0].0 < w[1].0 { (w[0], w[1]) } else { (w[1], w[0]) };
            small.1 < large.1 && small.2 < large.2
        })
    }
}

/// Field wide enough that every trajectory up to 40 m/s stays on the grid.
pub fn sweep_field() -> Result<PenaltyField> {
    generate_brownian(1, GridShape { n_t: 100, n_s: 1600, dt: 0.1, ds: 0.25 }, 8)
}

pub fn run_v0_sweep(
    field: &PenaltyField,
    params: &PlanParams,
    v0_list: &[f64],
    caps: &[f64],
    cfg: &BenchConfig,
) -> Result<V0Sweep> {
    let mut rows = Vec::new();
    let mut top_speed = Vec::new();
    let mut monotone_in_v0 = true;
    let top = v0_list.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for &cap in caps {
        let mut last = 0.0;
        for &v0 in v0_list {
            let p = PlanParams { v0, s_cap: Some(cap), ..*params };
            let n = candidate_set(&p)?.len();
            let mut pre = || precompute_with(field, &p, cfg.parallel).map(drop);
            let mut fast_job = || fast(field, &p, cfg).map(drop);
            let mut direct_job = || direct(field, &p, cfg).map(drop);
            let stats = interleaved(cfg, &mut [&mut pre, &mut fast_job, &mut direct_job])?;
            let label = "v0";
            rows.push(BenchRow::new(label, "fast", "precompute", &p, n, field.ds(), stats[0]));
            rows.push(BenchRow::new(label, "fast", "total", &p, n, field.ds(), stats[1]));
            rows.push(BenchRow::new(label, "direct", "total", &p, n, field.ds(), stats[2]));
            if stats[1].median < last * 0.9 {
                monotone_in_v0 = false;
            }
            last = stats[1].median;
            if v0 == top {
                top_speed.push((cap, n, stats[1].median));
            }
        }
    }
    Ok(V0Sweep { rows, top_speed, monotone_in_v0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub rows: Vec<BenchRow>,
    /// `(max - min) / min` of the median precompute time over candidate counts.
    pub precompute_spread: f64,
    /// Median direct time ratio per doubling of the candidate count.
    pub direct_doubling: Vec<f64>,
    /// Least-squares slope of log direct time against log candidate count.
    pub direct_slope: f64,
    /// Median precompute time ratio per halving of the column spacing.
    pub ds_halving: Vec<f64>,
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Candidate counts `{21, 41, 81, 161}` at 0.25 m columns, then column
/// spacings `{0.5, 0.25, 0.125}` at 81 candidates over the same 200 m.
pub fn run_scaling(params: &PlanParams, cfg: &BenchConfig) -> Result<Scaling> {
    let span = params.a_max - params.a_min;
    let counts = [21usize, 41, 81, 161];
    let field = generate_brownian(7, GridShape { n_t: 100, n_s: 800, dt: 0.1, ds: 0.25 }, 8)?;
    let variants: Vec<PlanParams> =
        counts.iter().map(|&n| PlanParams { da: span / (n - 1) as f64, ..*params }).collect();

    let mut jobs_pre: Vec<Box<dyn FnMut() -> Result<()>>> = Vec::new();
    for p in &variants {
        let f = &field;
        let parallel = cfg.parallel;
        jobs_pre.push(Box::new(move || precompute_with(f, p, parallel).map(drop)));
    }
    let mut refs: Vec<&mut dyn FnMut() -> Result<()>> = jobs_pre.iter_mut().map(|b| b.as_mut() as _).collect();
    let pre_stats = interleaved(cfg, &mut refs)?;

    let direct_cfg = BenchConfig { trials: cfg.trials.clamp(3, 10), ..*cfg };
    let mut jobs_direct: Vec<Box<dyn FnMut() -> Result<()>>> = Vec::new();
    for p in &variants {
        let f = &field;
        jobs_direct.push(Box::new(move || direct(f, p, &direct_cfg).map(drop)));
    }
    let mut refs: Vec<&mut dyn FnMut() -> Result<()>> = jobs_direct.iter_mut().map(|b| b.as_mut() as _).collect();
    let direct_stats = interleaved(&direct_cfg, &mut refs)?;

    let mut rows = Vec::new();
    for (k, p) in variants.iter().enumerate() {
        let n = candidate_set(p)?.len();
        rows.push(BenchRow::new("scaling_candidates", "fast", "precompute", p, n, 0.25, pre_stats[k]));
        rows.push(BenchRow::new("scaling_candidates", "direct", "total", p, n, 0.25, direct_stats[k]));
    }
    let pre_medians: Vec<f64> = pre_stats.iter().map(|s| s.median).collect();
    let lo = pre_medians.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pre_medians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let direct_medians: Vec<f64> = direct_stats.iter().map(|s| s.median).collect();
    let direct_doubling = direct_medians.windows(2).map(|w| w[1] / w[0]).collect();
    let xs: Vec<f64> = counts.iter().map(|&n| n as f64).collect();
    let direct_slope = log_slope(&xs, &direct_medians);

    let spacings = [0.5, 0.25, 0.125];
    let fields: Vec<PenaltyField> = spacings
        .iter()
        .map(|&ds| generate_brownian(7, GridShape { n_t: 100, n_s: (200.0 / ds) as usize, dt: 0.1, ds }, 8))
        .collect::<Result<_>>()?;
    let mut jobs_ds: Vec<Box<dyn FnMut() -> Result<()>>> = Vec::new();
    for f in &fields {
        let parallel = cfg.parallel;
        jobs_ds.push(Box::new(move || precompute_with(f, params, parallel).map(drop)));
    }
    let mut refs: Vec<&mut dyn FnMut() -> Result<()>> = jobs_ds.iter_mut().map(|b| b.as_mut() as _).collect();
    let ds_stats = interleaved(cfg, &mut refs)?;
    let n = candidate_set(params)?.len();
    for (k, &ds) in spacings.iter().enumerate() {
        rows.push(BenchRow::new("scaling_ds", "fast", "precompute", params, n, ds, ds_stats[k]));
    }
    let ds_halving = ds_stats.windows(2).map(|w| w[1].median / w[0].median).collect();

    Ok(Scaling { rows, precompute_spread: (hi - lo) / lo, direct_doubling, direct_slope, ds_halving })
}
