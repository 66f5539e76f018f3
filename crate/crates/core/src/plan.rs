//! Result types shared by both solvers and the common argmin rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::PlanParams;

/// Expected penalty of one candidate deceleration, split into the part from
/// failures during the valve transition (`p_b`) and after it (`p_c`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub a_next: f64,
    pub p_b: f64,
    pub p_c: f64,
    pub total: f64,
    pub t_valve: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Fast,
    Direct,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Solver::Fast),
            "direct" => Ok(Solver::Direct),
            other => Err(Error::Parameter(format!("unknown solver '{other}'"))),
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub precompute_s: f64,
    pub evaluate_s: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.precompute_s + self.evaluate_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub solver: Solver,
    pub a_star: f64,
    #[serde(rename = "candidates")]
    pub evaluations: Vec<CandidateEvaluation>,
    pub tie_break_applied: bool,
    pub timings: Timings,
    /// Penalty accumulated before the failure. Only the direct solver
    /// computes it; it is the same for every candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_fail: Option<f64>,
    pub params: PlanParams,
}

impl PlanResult {
    pub fn best(&self) -> &CandidateEvaluation {
        self.evaluations.iter().find(|e| e.a_next == self.a_star).expect("a_star is one of the candidates")
    }
}

/// Relative tolerance under which two totals count as equal.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Index of the optimal candidate and whether more than one candidate was
/// tied for the minimum. Ties go to the smallest valve motion
/// `|a_next - a_prev|`, then to the stronger deceleration.
pub fn select_optimum(evals: &[CandidateEvaluation], a_prev: f64) -> (usize, bool) {
    assert!(!evals.is_empty(), "no candidates to select from");
    let min = evals.iter().map(|e| e.total).fold(f64::INFINITY, f64::min);
    let tol = TIE_TOLERANCE * min.abs().max(1e-300) + 1e-300;
    let tied: Vec<usize> = (0..evals.len()).filter(|&i| evals[i].total - min <= tol).collect();
    let best = *tied
        .iter()
        .min_by(|&&i, &&j| {
            let (a, b) = (&evals[i], &evals[j]);
            (a.a_next - a_prev).abs().total_cmp(&(b.a_next - a_prev).abs()).then(a.a_next.total_cmp(&b.a_next))
        })
        .unwrap();
    (best, tied.len() > 1)
}

/// Candidate decelerations `a_min, a_min + Δa, …, a_max`, with those whose
/// worst-case braking distance `v0 dt_plan + v0² / (2|a|)` exceeds the cap
/// removed.
pub fn candidate_set(params: &PlanParams) -> Result<Vec<f64>> {
    params.validate()?;
    let span = params.a_max - params.a_min;
    let steps = (span / params.da + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=steps)
        .map(|k| {
            let a = params.a_min + k as f64 * params.da;
            let a = (a * 1e9).round() / 1e9;
            if (a - params.a_prev).abs() < 1e-9 {
                params.a_prev
            } else {
                a
            }
        })
        .collect();
    if params.a_max - out[out.len() - 1] > 1e-9 {
        out.push(params.a_max);
    }
    if let Some(cap) = params.s_cap {
        let v0 = params.v0;
        out.retain(|&a| v0 * params.dt_plan + v0 * v0 / (2.0 * a.abs()) <= cap + 1e-9);
        if out.is_empty() {
            return Err(Error::InfeasibleCap { cap, v0 });
        }
    }
    Ok(out)
}
