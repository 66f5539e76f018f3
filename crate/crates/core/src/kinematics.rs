//! Closed-form stopping kinematics.
//!
//! Times are relative to the start of the planning cycle (`t_now = 0`), so the
//! failure time ranges over `[0, dt_plan]`. Decelerations are negative numbers.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::field::TrajectoryFan;

/// Per-cycle planning state and configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanParams {
    /// Current speed (m/s).
    pub v0: f64,
    /// Current valve setting (m/s²).
    pub a_prev: f64,
    /// Strongest admissible deceleration (m/s²).
    pub a_min: f64,
    /// Gentlest admissible deceleration (m/s²).
    pub a_max: f64,
    /// Replanning interval (s).
    pub dt_plan: f64,
    /// Prediction horizon (s).
    pub t_hzn: f64,
    /// Valve speed magnitude (m/s³).
    pub kappa_mag: f64,
    /// Candidate spacing (m/s²).
    pub da: f64,
    /// Optional maximum braking distance (m).
    #[serde(default)]
    pub s_cap: Option<f64>,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            v0: 15.0,
            a_prev: -4.0,
            a_min: -9.0,
            a_max: -1.0,
            dt_plan: 0.25,
            t_hzn: 10.0,
            kappa_mag: 100.0,
            da: 0.1,
            s_cap: None,
        }
    }
}

impl PlanParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.v0, self.a_prev, self.a_min, self.a_max, self.dt_plan, self.t_hzn, self.kappa_mag, self.da];
        if all.iter().any(|x| !x.is_finite()) {
            return param("plan parameters must be finite");
        }
        if self.v0 < 0.0 {
            return param(format!("v0 must be non-negative, got {}", self.v0));
        }
        if !(self.a_min <= self.a_prev && self.a_prev <= self.a_max && self.a_max < 0.0) {
            return param(format!(
                "need a_min <= a_prev <= a_max < 0, got a_min={} a_prev={} a_max={}",
                self.a_min, self.a_prev, self.a_max
            ));
        }
        if !(self.dt_plan > 0.0 && self.dt_plan < self.t_hzn) {
            return param(format!("need 0 < dt_plan < t_hzn, got dt_plan={} t_hzn={}", self.dt_plan, self.t_hzn));
        }
        if self.kappa_mag <= 0.0 {
            return param("valve speed must be positive");
        }
        if self.da <= 0.0 {
            return param("candidate spacing must be positive");
        }
        if let Some(cap) = self.s_cap {
            if !(cap > 0.0) {
                return param(format!("braking-distance cap must be positive, got {cap}"));
            }
        }
        Ok(())
    }

    /// Longest possible valve transition, `(a_max - a_min) / |κ|`.
    pub fn t_valve_max(&self) -> f64 {
        (self.a_max - self.a_min) / self.kappa_mag
    }

    pub fn transition(&self, a_next: f64) -> ValveTransition {
        ValveTransition::new(self.a_prev, a_next, self.kappa_mag)
    }
}

/// Linear valve motion from `a_prev` towards `a_next`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValveTransition {
    pub a_prev: f64,
    pub a_next: f64,
    /// Signed valve speed; its sign follows `a_next - a_prev`.
    pub kappa: f64,
    pub t_valve: f64,
}

impl ValveTransition {
    pub fn new(a_prev: f64, a_next: f64, kappa_mag: f64) -> Self {
        let kappa = if a_next >= a_prev { kappa_mag } else { -kappa_mag };
        Self { a_prev, a_next, kappa, t_valve: (a_next - a_prev).abs() / kappa_mag }
    }

    /// Deceleration frozen in by a failure at `t_fail`.
    #[inline]
    pub fn deceleration_at(&self, t_fail: f64) -> f64 {
        if t_fail >= self.t_valve {
            self.a_next
        } else {
            self.a_prev + self.kappa * t_fail.max(0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopPoint {
    pub t_stop: f64,
    pub s_stop: f64,
}

/// Time and arc length at which a trajectory braking with `a` from `t_fail`
/// comes to rest.
pub fn stop_point(v0: f64, t_fail: f64, a: f64) -> Result<StopPoint> {
    if !(a < 0.0) {
        return param(format!("deceleration must be negative, got {a}"));
    }
    if v0 < 0.0 || t_fail < 0.0 {
        return param("v0 and t_fail must be non-negative");
    }
    Ok(StopPoint { t_stop: t_fail - v0 / a, s_stop: v0 * t_fail - v0 * v0 / (2.0 * a) })
}

/// Arc length at time `t` of the trajectory that cruises at `v0` until
/// `t_fail` and then brakes with constant `a < 0` to a halt.
#[inline]
pub fn sigma_single(t: f64, v0: f64, t_fail: f64, a: f64) -> f64 {
    debug_assert!(a < 0.0);
    if t <= t_fail {
        return v0 * t;
    }
    let dt = t - t_fail;
    if dt >= -v0 / a {
        v0 * t_fail - v0 * v0 / (2.0 * a)
    } else {
        v0 * t + 0.5 * a * dt * dt
    }
}

/// Exact position for a failure during the valve transition (cubic term kept).
pub fn sigma_b(t: f64, t_fail: f64, params: &PlanParams, vt: &ValveTransition) -> Result<f64> {
    if !(0.0..=vt.t_valve).contains(&t_fail) {
        return param(format!("t_fail={t_fail} outside the transition [0, {}]", vt.t_valve));
    }
    Ok(sigma_single(t, params.v0, t_fail, vt.a_prev + vt.kappa * t_fail))
}

/// Position for a failure after the valve reached `a_next`.
pub fn sigma_c(t: f64, t_fail: f64, params: &PlanParams, a_next: f64) -> Result<f64> {
    if !(a_next < 0.0) {
        return param(format!("a_next must be negative, got {a_next}"));
    }
    Ok(sigma_single(t, params.v0, t_fail, a_next))
}

/// Position at `t` for any failure time, with the valve model applied.
#[inline]
pub fn failure_position(t: f64, t_fail: f64, v0: f64, vt: &ValveTransition) -> f64 {
    sigma_single(t, v0, t_fail, vt.deceleration_at(t_fail))
}

/// Real roots of `a x² + b x + c`, in no particular order. Degenerates to the
/// linear case when `a` is negligible.
pub(crate) fn quadratic_roots(a: f64, b: f64, c: f64) -> [Option<f64>; 2] {
    let scale = b.abs().max(c.abs()).max(1e-300);
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { [Some(-c / b), None] } else { [None, None] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return [None, None];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return [Some(0.0), Some(0.0)];
    }
    [Some(q / a), Some(c / q)]
}

/// Failure times at which a transition-frozen trajectory comes to rest
/// exactly at `t`: roots of `κ x² + (a_prev - κ t) x - (a_prev t + v0) = 0`.
pub(crate) fn stop_crossings(t: f64, v0: f64, a_prev: f64, kappa: f64) -> [Option<f64>; 2] {
    quadratic_roots(kappa, a_prev - kappa * t, -(a_prev * t + v0))
}

/// Reachable arc-length band per prediction-time row over every candidate
/// deceleration and failure time.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Shortest and longest positions any failure trajectory can reach at each
/// row `t = m * dt`, `m < n_rows`.
///
/// The longest comes from the latest failure braking with the gentlest
/// deceleration. The shortest lies on the family that transitions towards
/// `a_min`; it is found among the family's end points, its stationary points
/// and its stop-locus crossings.
pub fn envelope(params: &PlanParams, dt: f64, n_rows: usize) -> Envelope {
    let v0 = params.v0;
    let stronger = params.transition(params.a_min);
    let kappa = stronger.kappa;
    let t_end = stronger.t_valve.min(params.dt_plan);
    let mut lower = Vec::with_capacity(n_rows);
    let mut upper = Vec::with_capacity(n_rows);
    for m in 0..n_rows {
        let t = m as f64 * dt;
        upper.push(sigma_single(t, v0, t.min(params.dt_plan), params.a_max));

        let mut probes = vec![0.0, t_end];
        // stationary point of the moving branch: κ(t - x)/2 = a_prev + κ x
        probes.push(t / 3.0 - params.a_prev / (1.5 * kappa));
        // stationary point of the rest branch: α² = -κ v0 / 2
        if kappa < 0.0 && v0 > 0.0 {
            probes.push((-params.a_prev - (-0.5 * kappa * v0).sqrt()) / kappa);
        }
        probes.extend(stop_crossings(t, v0, params.a_prev, kappa).into_iter().flatten());
        let lo = probes
            .into_iter()
            .filter(|x| x.is_finite())
            .map(|x| x.clamp(0.0, t_end))
            .map(|x| failure_position(t, x, v0, &stronger))
            .fold(f64::INFINITY, f64::min);
        lower.push(lo);
    }
    Envelope { lower, upper }
}

/// Sample trajectories of the failure fan for `a_next`, for drawing.
pub fn trajectory_fan(params: &PlanParams, a_next: f64, dt: f64, n_rows: usize, samples: usize) -> TrajectoryFan {
    let vt = params.transition(a_next);
    let n = samples.max(2);
    let mut fails: Vec<f64> = (0..n).map(|k| params.dt_plan * k as f64 / (n - 1) as f64).collect();
    if vt.t_valve > 0.0 && vt.t_valve < params.dt_plan {
        fails.push(vt.t_valve);
    }
    let paths = fails
        .into_iter()
        .map(|tf| (0..n_rows).map(|m| failure_position(m as f64 * dt, tf, params.v0, &vt)).collect())
        .collect();
    TrajectoryFan { paths }
}
