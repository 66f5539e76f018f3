//! Brute-force reference solver.
//!
//! Failure times are enumerated on a grid fine enough that neighbouring
//! trajectories are never more than one arc-length cell apart in any row;
//! every trajectory is sampled explicitly (exact kinematics, cubic term
//! included) and the results are combined with the trapezoid rule.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::Result;
use crate::fast_solver::{check_grid, finish, row_count};
use crate::field::{sample_row, PenaltyField};
use crate::kinematics::{failure_position, PlanParams};
use crate::plan::{candidate_set, CandidateEvaluation, PlanResult, Solver, Timings};

/// Failure-time samples on `[0, dt_plan]` with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FailTimeGrid {
    pub samples: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FailTimeGrid {
    fn from_samples(samples: Vec<f64>) -> Self {
        let n = samples.len();
        let mut weights = vec![0.0; n];
        for k in 0..n.saturating_sub(1) {
            let h = 0.5 * (samples[k + 1] - samples[k]);
            weights[k] += h;
            weights[k + 1] += h;
        }
        Self { samples, weights }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The same grid with extra samples inserted (points outside the grid's
    /// range or already present are ignored).
    pub fn with_breakpoints(&self, points: &[f64]) -> Self {
        let (lo, hi) = (self.samples[0], self.samples[self.len() - 1]);
        let mut samples = self.samples.clone();
        samples.extend(points.iter().copied().filter(|&x| x > lo && x < hi));
        samples.sort_by(f64::total_cmp);
        samples.dedup();
        Self::from_samples(samples)
    }
}

/// Upper bound on `|∂σ/∂τ|` over all rows for a failure frozen at
/// deceleration `alpha` during a transition at signed rate `kappa`.
fn sweep_rate(v0: f64, alpha: f64, kappa: f64) -> f64 {
    let rest = (v0 + kappa * v0 * v0 / (2.0 * alpha * alpha)).abs();
    let moving = alpha * alpha / (2.0 * kappa.abs());
    v0.max(rest).max(moving)
}

/// Failure-time grid for one candidate with arc-length resolution `ds`.
///
/// During the valve transition the step adapts so that the position at any
/// row moves by at most `ds` between samples; afterwards the step is uniform
/// and at most `ds / v0`. A sample is always placed at the end of the
/// transition.
pub fn build_fail_grid(params: &PlanParams, a_next: f64, ds: f64) -> Result<FailTimeGrid> {
    params.validate()?;
    let dt_plan = params.dt_plan;
    let v0 = params.v0;
    if v0 == 0.0 {
        return Ok(FailTimeGrid::from_samples(vec![0.0, dt_plan]));
    }
    let vt = params.transition(a_next);
    let t_b = vt.t_valve.min(dt_plan);
    let mut samples = vec![0.0];
    let mut x = 0.0;
    while x < t_b {
        let h0 = ds / sweep_rate(v0, vt.deceleration_at(x), vt.kappa);
        let x1 = (x + h0).min(t_b);
        let rate =
            sweep_rate(v0, vt.deceleration_at(x), vt.kappa).max(sweep_rate(v0, vt.a_prev + vt.kappa * x1, vt.kappa));
        x = (x + ds / rate).min(t_b);
        if t_b - x < 1e-12 {
            x = t_b;
        }
        samples.push(x);
    }
    let rest = dt_plan - t_b;
    if rest > 0.0 {
        let n = ((rest * v0 / ds) - 1e-9).ceil().max(1.0) as usize;
        let h = rest / n as f64;
        samples.extend((1..n).map(|k| t_b + k as f64 * h));
        samples.push(dt_plan);
    }
    Ok(FailTimeGrid::from_samples(samples))
}

/// Expected penalty split by sub-trajectory set, normalised by `1/dt_plan`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DirectPenalty {
    /// Still cruising at the row time (failure not yet happened).
    pub pre_fail: f64,
    /// Failed during the valve transition.
    pub post_b: f64,
    /// Failed after the valve reached `a_next`.
    pub post_c: f64,
}

impl DirectPenalty {
    pub fn post_fail(&self) -> f64 {
        self.post_b + self.post_c
    }
}

pub fn expected_penalty(field: &PenaltyField, params: &PlanParams, a_next: f64) -> Result<DirectPenalty> {
    check_grid(field, params)?;
    Ok(penalty_unchecked(field, params, a_next, field.ds()))
}

/// As [`expected_penalty`] but with the failure-time grid built for
/// arc-length resolution `ds` instead of the field's column spacing.
pub fn expected_penalty_at(field: &PenaltyField, params: &PlanParams, a_next: f64, ds: f64) -> Result<DirectPenalty> {
    check_grid(field, params)?;
    Ok(penalty_unchecked(field, params, a_next, ds))
}

fn penalty_unchecked(field: &PenaltyField, params: &PlanParams, a_next: f64, ds: f64) -> DirectPenalty {
    let dt = field.dt();
    let n_rows = row_count(field, params);
    let row_times: Vec<f64> = (1..=n_rows).map(|m| m as f64 * dt).collect();
    let grid = build_fail_grid(params, a_next, ds).expect("parameters validated").with_breakpoints(&row_times);
    let vt = params.transition(a_next);
    let t_b = vt.t_valve.min(params.dt_plan);
    let v0 = params.v0;
    let ts = &grid.samples;
    let mut w = vec![0.0; ts.len()];
    let mut out = DirectPenalty::default();
    for (m, &t) in (1..=n_rows).zip(&row_times) {
        let row = field.row(m);
        for (wk, &tf) in w.iter_mut().zip(ts) {
            let s = if tf >= t { v0 * t } else { failure_position(t, tf, v0, &vt) };
            *wk = sample_row(row, field.ds(), s);
        }
        for k in 0..ts.len() - 1 {
            let (t0, t1) = (ts[k], ts[k + 1]);
            let val = 0.5 * (t1 - t0) * (w[k] + w[k + 1]);
            let mid = 0.5 * (t0 + t1);
            if mid >= t {
                out.pre_fail += val;
            } else if mid < t_b {
                out.post_b += val;
            } else {
                out.post_c += val;
            }
        }
    }
    let scale = dt / params.dt_plan;
    out.pre_fail *= scale;
    out.post_b *= scale;
    out.post_c *= scale;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectOptions {
    /// Evaluate candidates on the rayon thread pool.
    pub parallel: bool,
    /// Failure-time samples per arc-length cell of sweep. 1 gives the
    /// baseline resolution where every cell is hit at least once.
    pub refine: u32,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self { parallel: false, refine: 1 }
    }
}

/// Refinement used when the direct solver serves as the accuracy reference
/// for the fast solver. At `refine = 1` its quadrature error (about 1e-3
/// relative) exceeds the gap between neighbouring candidates near a flat
/// optimum.
pub const ORACLE_REFINE: u32 = 8;

pub fn plan_direct(field: &PenaltyField, params: &PlanParams) -> Result<PlanResult> {
    plan_direct_with(field, params, DirectOptions::default())
}

pub fn plan_direct_with(field: &PenaltyField, params: &PlanParams, opts: DirectOptions) -> Result<PlanResult> {
    let start = Instant::now();
    check_grid(field, params)?;
    let candidates = candidate_set(params)?;
    let ds = field.ds() / opts.refine.max(1) as f64;
    let eval = |&a: &f64| {
        let d = penalty_unchecked(field, params, a, ds);
        let e = CandidateEvaluation {
            a_next: a,
            p_b: d.post_b,
            p_c: d.post_c,
            total: d.post_fail(),
            t_valve: params.transition(a).t_valve,
        };
        (e, d.pre_fail)
    };
    let results: Vec<(CandidateEvaluation, f64)> =
        if opts.parallel { candidates.par_iter().map(eval).collect() } else { candidates.iter().map(eval).collect() };
    let pre_fail = results[0].1;
    let evaluations = results.into_iter().map(|r| r.0).collect();
    let mut result = finish(Solver::Direct, params, evaluations, Timings::default(), Some(pre_fail));
    result.timings = Timings { precompute_s: 0.0, evaluate_s: start.elapsed().as_secs_f64() };
    Ok(result)
}
