//! Failure-time substitution: for a fixed prediction time `t`, the failure
//! time `τ(t, s)` whose trajectory passes arc length `s`, and its density
//! `∂τ/∂s`.
//!
//! Four regimes are distinguished: failure during the valve transition
//! (`B`) or after it (`C`), each with the vehicle still moving or already at
//! rest. For `B` while moving, the cubic term `κ τ³ / 2` of the trajectory is
//! dropped so that `τ` solves a quadratic.

use crate::error::{param, Error, Result};
use crate::kinematics::{quadratic_roots, PlanParams, ValveTransition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Moving,
    Stopped,
}

/// Quadratic coefficients of the transition-frozen trajectories at time `t`.
///
/// Moving: `s ≈ alpha_m τ² + beta_m τ + gamma_m`.
/// At rest: `alpha_r τ² + beta_r(s) τ + gamma_r(s) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeCoefficients {
    pub alpha_m: f64,
    pub beta_m: f64,
    pub gamma_m: f64,
    pub alpha_r: f64,
    v0: f64,
    a_prev: f64,
    kappa: f64,
}

impl RegimeCoefficients {
    pub fn new(t: f64, v0: f64, a_prev: f64, kappa: f64) -> Self {
        Self {
            alpha_m: 0.5 * a_prev - kappa * t,
            beta_m: 0.5 * kappa * t * t - a_prev * t,
            gamma_m: v0 * t + 0.5 * a_prev * t * t,
            alpha_r: 2.0 * v0 * kappa,
            v0,
            a_prev,
            kappa,
        }
    }

    pub fn beta_r(&self, s: f64) -> f64 {
        2.0 * self.v0 * self.a_prev - 2.0 * self.kappa * s
    }

    pub fn gamma_r(&self, s: f64) -> f64 {
        -self.v0 * self.v0 - 2.0 * self.a_prev * s
    }

    /// Moving-branch position with the cubic term dropped.
    #[inline]
    pub fn approx_position(&self, t_fail: f64) -> f64 {
        (self.alpha_m * t_fail + self.beta_m) * t_fail + self.gamma_m
    }

    fn moving_discriminant(&self, s: f64) -> f64 {
        self.beta_m * self.beta_m - 4.0 * self.alpha_m * (self.gamma_m - s)
    }

    fn rest_discriminant(&self, s: f64) -> f64 {
        let b = self.beta_r(s);
        b * b - 4.0 * self.alpha_r * self.gamma_r(s)
    }
}

/// Quadratic-in-`t_fail` approximation of the transition-frozen moving
/// trajectory.
pub fn sigma_b_approx(t: f64, t_fail: f64, params: &PlanParams, vt: &ValveTransition) -> f64 {
    RegimeCoefficients::new(t, params.v0, vt.a_prev, vt.kappa).approx_position(t_fail)
}

/// Failure time at which the approximate moving position is stationary,
/// `t + 3κt² / (2 a_prev − 4κt)`.
pub fn moving_extremum_fail_time(t: f64, a_prev: f64, kappa: f64) -> Option<f64> {
    let den = 2.0 * a_prev - 4.0 * kappa * t;
    (den != 0.0).then(|| t + 3.0 * kappa * t * t / den)
}

/// Failure time at which the rest position `v0 τ − v0² / (2(a_prev + κτ))`
/// is stationary. Only exists for a strengthening valve (`κ < 0`); it is the
/// root whose frozen deceleration `−√(−κ v0 / 2)` is negative.
pub fn rest_extremum_fail_time(v0: f64, a_prev: f64, kappa: f64) -> Option<f64> {
    (kappa < 0.0 && v0 > 0.0).then(|| (-a_prev - (-0.5 * kappa * v0).sqrt()) / kappa)
}

/// Picks the root of `a x² + b x + c` lying in `[lo, hi]` (with a small
/// tolerance), preferring the smaller one.
fn root_in(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> Option<f64> {
    let tol = 1e-12 * (1.0 + hi.abs());
    let mut best: Option<f64> = None;
    for r in quadratic_roots(a, b, c).into_iter().flatten() {
        if r >= lo - tol && r <= hi + tol {
            let r = r.clamp(lo, hi);
            best = Some(best.map_or(r, |x: f64| x.min(r)));
        }
    }
    best
}

/// End of the monotone branch that starts at `t_fail = 0`, capped at
/// `t_valve`.
fn branch_end(t: f64, params: &PlanParams, vt: &ValveTransition, motion: Motion) -> f64 {
    let ext = match motion {
        Motion::Moving => moving_extremum_fail_time(t, vt.a_prev, vt.kappa),
        Motion::Stopped => rest_extremum_fail_time(params.v0, vt.a_prev, vt.kappa),
    };
    match ext {
        Some(x) if x > 0.0 && x < vt.t_valve => x,
        _ => vt.t_valve,
    }
}

/// Failure time during the transition whose trajectory is at `s` at time `t`,
/// on the branch starting at `t_fail = 0`.
pub fn tau_b(t: f64, s: f64, params: &PlanParams, vt: &ValveTransition, motion: Motion) -> Result<f64> {
    let co = RegimeCoefficients::new(t, params.v0, vt.a_prev, vt.kappa);
    let hi = branch_end(t, params, vt, motion);
    let root = match motion {
        Motion::Moving => root_in(co.alpha_m, co.beta_m, co.gamma_m - s, 0.0, hi),
        Motion::Stopped => {
            if params.v0 <= 0.0 {
                return param("rest regime needs v0 > 0");
            }
            root_in(co.alpha_r, co.beta_r(s), co.gamma_r(s), 0.0, hi)
        }
    };
    root.ok_or_else(|| Error::OutOfRegion(format!("s={s} m at t={t} s is not reached for t_fail in [0, {hi}]")))
}

/// `∂τ/∂s` during the transition.
///
/// Moving: `±1/√(β² − 4αγ + 4αs)`, signed by the slope of the branch (equal
/// to `sign(κ)` once `t > 2|a_prev|/|κ|`). At rest:
/// `1/(2v0) + σ(β■ + 4κs)/(2v0 √(β■² − 4α■γ■))` with `σ` the root selector.
pub fn dtau_ds_b(t: f64, s: f64, params: &PlanParams, vt: &ValveTransition, motion: Motion) -> Result<f64> {
    let co = RegimeCoefficients::new(t, params.v0, vt.a_prev, vt.kappa);
    let tau = tau_b(t, s, params, vt, motion)?;
    match motion {
        Motion::Moving => {
            let disc = co.moving_discriminant(s);
            if disc <= 0.0 {
                return Err(Error::Singular(format!("moving transition discriminant {disc} at s={s}")));
            }
            let slope = 2.0 * co.alpha_m * tau + co.beta_m;
            Ok(slope.signum() / disc.sqrt())
        }
        Motion::Stopped => {
            let disc = co.rest_discriminant(s);
            if disc <= 0.0 {
                return Err(Error::Singular(format!("rest transition discriminant {disc} at s={s}")));
            }
            let selector = (2.0 * co.alpha_r * tau + co.beta_r(s)).signum();
            let v0 = params.v0;
            Ok(1.0 / (2.0 * v0) + selector * (co.beta_r(s) + 4.0 * vt.kappa * s) / (2.0 * v0 * disc.sqrt()))
        }
    }
}

/// Failure time after the transition whose trajectory (braking with
/// `a_next`) is at `s` at time `t`.
pub fn tau_c(t: f64, s: f64, params: &PlanParams, a_next: f64, motion: Motion) -> Result<f64> {
    if !(a_next < 0.0) {
        return param(format!("a_next must be negative, got {a_next}"));
    }
    let v0 = params.v0;
    match motion {
        Motion::Moving => {
            let gap = v0 * t - s;
            if gap < 0.0 {
                return Err(Error::OutOfRegion(format!("s={s} m exceeds v0*t={} m", v0 * t)));
            }
            Ok(t - (2.0 * gap / -a_next).sqrt())
        }
        Motion::Stopped => {
            if v0 <= 0.0 {
                return param("rest regime needs v0 > 0");
            }
            Ok(s / v0 + v0 / (2.0 * a_next))
        }
    }
}

pub fn dtau_ds_c(t: f64, s: f64, params: &PlanParams, a_next: f64, motion: Motion) -> Result<f64> {
    if !(a_next < 0.0) {
        return param(format!("a_next must be negative, got {a_next}"));
    }
    let v0 = params.v0;
    match motion {
        Motion::Moving => {
            let gap = 2.0 * v0 * t - 2.0 * s;
            if gap <= 0.0 {
                return Err(Error::Singular(format!("s={s} m at or beyond v0*t={} m", v0 * t)));
            }
            Ok(1.0 / ((-a_next).sqrt() * gap.sqrt()))
        }
        Motion::Stopped => {
            if v0 <= 0.0 {
                return param("rest regime needs v0 > 0");
            }
            Ok(1.0 / v0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{sigma_b, sigma_c, stop_point};

    fn params(v0: f64, a_prev: f64) -> PlanParams {
        PlanParams { v0, a_prev, ..PlanParams::default() }
    }

    #[test]
    fn approximation_drops_only_the_cubic() {
        let p = params(15.0, -4.0);
        let vt = p.transition(-9.0);
        for t in [0.3, 1.0, 2.0] {
            for tf in [0.0, 0.01, 0.03, 0.05] {
                let exact = 15.0 * t + 0.5 * (-4.0 + vt.kappa * tf) * (t - tf) * (t - tf);
                let approx = sigma_b_approx(t, tf, &p, &vt);
                assert!((exact - approx - 0.5 * vt.kappa * tf.powi(3)).abs() < 1e-12);
            }
        }
        // reference example: exact 12.54975 m, cubic term -5e-5 m
        let vt = p.transition(-6.0);
        let approx = sigma_b_approx(1.0, 0.01, &p, &vt);
        assert!((approx - 12.5498).abs() < 1e-12, "{approx}");
        assert!((sigma_b(1.0, 0.01, &p, &vt).unwrap() - 12.54975).abs() < 1e-12);
        let co = RegimeCoefficients::new(1.0, 15.0, -4.0, -100.0);
        assert_eq!(co.approx_position(0.0), co.gamma_m);
        assert_eq!(co.gamma_m, 13.0);
    }

    #[test]
    fn cubic_bound_at_reference_values() {
        let p = params(30.0, -1.0);
        let vt = p.transition(-9.0);
        assert!((vt.kappa / 2.0).abs() * vt.t_valve.powi(3) < 0.026);
        assert!((0.5 * 100.0 * 0.08f64.powi(3) - 0.0256).abs() < 1e-15);
    }

    #[test]
    fn tau_b_moving_boundary_root() {
        let p = params(15.0, -4.0);
        let vt = p.transition(-8.0);
        let co = RegimeCoefficients::new(2.0, 15.0, -4.0, vt.kappa);
        assert_eq!(tau_b(2.0, co.gamma_m, &p, &vt, Motion::Moving).unwrap(), 0.0);
    }

    #[test]
    fn tau_b_moving_inverts_approximation() {
        let p = params(20.0, -3.0);
        for a_next in [-1.0, -2.2, -6.5, -9.0] {
            let vt = p.transition(a_next);
            for t in [0.5, 1.0, 3.0] {
                for k in 0..100 {
                    let x = vt.t_valve * k as f64 / 99.0;
                    let s = sigma_b_approx(t, x, &p, &vt);
                    let tau = tau_b(t, s, &p, &vt, Motion::Moving).unwrap();
                    assert!((sigma_b_approx(t, tau, &p, &vt) - s).abs() < 1e-9);
                    assert!((tau - x).abs() < 1e-6, "a_next={a_next} t={t} x={x} tau={tau}");
                }
            }
        }
    }

    #[test]
    fn moving_extremum_location() {
        // dense sampling of the approximation over t_fail
        let (t, a_prev, kappa) = (0.3, -6.0, -100.0);
        let x = moving_extremum_fail_time(t, a_prev, kappa).unwrap();
        let co = RegimeCoefficients::new(t, 15.0, a_prev, kappa);
        let grid: Vec<f64> = (0..=100_000).map(|k| 0.1 * k as f64 / 100_000.0).collect();
        let best =
            grid.iter().copied().min_by(|a, b| co.approx_position(*a).total_cmp(&co.approx_position(*b))).unwrap();
        assert!(co.alpha_m > 0.0 && x > 0.0);
        assert!((best - x).abs() < 2e-6, "{best} vs {x}");
        assert!((x - (-co.beta_m / (2.0 * co.alpha_m))).abs() < 1e-12);
    }

    #[test]
    fn tau_b_rejects_points_outside_region() {
        let p = params(15.0, -4.0);
        let vt = p.transition(-2.0);
        assert!(matches!(tau_b(2.0, 100.0, &p, &vt, Motion::Moving), Err(Error::OutOfRegion(_))));
        assert!(matches!(tau_b(2.0, 0.0, &p, &vt, Motion::Moving), Err(Error::OutOfRegion(_))));
    }

    #[test]
    fn tau_b_rest_inverts_stop_distance() {
        let p = params(12.0, -5.0);
        for a_next in [-1.0, -3.0, -7.0, -9.0] {
            let vt = p.transition(a_next);
            for k in 0..=50 {
                let x = vt.t_valve * k as f64 / 50.0;
                let s = sigma_b(100.0, x, &p, &vt).unwrap();
                let tau = tau_b(100.0, s, &p, &vt, Motion::Stopped).unwrap();
                assert!((sigma_b(100.0, tau, &p, &vt).unwrap() - s).abs() < 1e-9);
                assert!((tau - x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dtau_b_matches_central_differences() {
        let h = 1e-4;
        let p = params(15.0, -4.0);
        for (a_next, t, motion) in [
            (-1.0, 1.0, Motion::Moving),
            (-9.0, 1.0, Motion::Moving),
            (-7.0, 0.5, Motion::Moving),
            (-1.0, 50.0, Motion::Stopped),
            (-9.0, 50.0, Motion::Stopped),
        ] {
            let vt = p.transition(a_next);
            let x = 0.5 * vt.t_valve;
            let s = match motion {
                Motion::Moving => sigma_b_approx(t, x, &p, &vt),
                Motion::Stopped => sigma_b(t, x, &p, &vt).unwrap(),
            };
            let d = dtau_ds_b(t, s, &p, &vt, motion).unwrap();
            let fd =
                (tau_b(t, s + h, &p, &vt, motion).unwrap() - tau_b(t, s - h, &p, &vt, motion).unwrap()) / (2.0 * h);
            assert!(((d - fd) / d).abs() < 1e-4, "{a_next} {t}: {d} vs {fd}");
            if a_next > -4.0 {
                assert!(d > 0.0);
            } else {
                assert!(d < 0.0);
            }
        }
    }

    #[test]
    fn dtau_b_moving_sign_follows_kappa() {
        let p = params(15.0, -5.0);
        let (up, down) = (p.transition(-4.0), p.transition(-6.0));
        let t = 2.0;
        let x = 0.005;
        let su = sigma_b_approx(t, x, &p, &up);
        let sd = sigma_b_approx(t, x, &p, &down);
        assert!(dtau_ds_b(t, su, &p, &up, Motion::Moving).unwrap() > 0.0);
        assert!(dtau_ds_b(t, sd, &p, &down, Motion::Moving).unwrap() < 0.0);
    }

    #[test]
    fn rest_singularity_threshold() {
        // interior extremum of the stop distance exists iff v0 < 2 a_next² / |κ|
        let threshold = 2.0 * 81.0 / 100.0;
        assert!((threshold - 1.62f64).abs() < 1e-12);
        for v0 in [0.5, 1.0, 1.6, 1.64, 2.0, 5.0] {
            let p = params(v0, -1.0);
            let vt = p.transition(-9.0);
            let x = rest_extremum_fail_time(v0, -1.0, vt.kappa).unwrap();
            assert_eq!((0.0..=vt.t_valve).contains(&x), v0 < threshold, "v0={v0}");
        }
        assert!(rest_extremum_fail_time(3.0, -2.0, 100.0).is_none());
    }

    #[test]
    fn tau_c_examples() {
        let p = params(15.0, -3.0);
        let s_stop = stop_point(15.0, 0.2, -3.0).unwrap().s_stop;
        assert!((tau_c(80.0, s_stop, &p, -3.0, Motion::Stopped).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(tau_c(1.5, 22.5, &p, -3.0, Motion::Moving).unwrap(), 1.5);
        assert!((tau_c(5.0, 41.15625, &p, -3.0, Motion::Moving).unwrap() - 0.25).abs() < 1e-12);
        assert!(matches!(tau_c(1.0, 15.5, &p, -3.0, Motion::Moving), Err(Error::OutOfRegion(_))));
        for k in 1..50 {
            let x = 0.25 * k as f64 / 50.0;
            let s = sigma_c(2.0, x, &p, -6.0).unwrap();
            let tau = tau_c(2.0, s, &p, -6.0, Motion::Moving).unwrap();
            assert!((sigma_c(2.0, tau, &p, -6.0).unwrap() - s).abs() < 1e-9);
        }
    }

    #[test]
    fn tau_c_regimes_meet_at_stop_locus() {
        let p = params(15.0, -3.0);
        for a in [-1.5, -3.0, -9.0] {
            let t = 1.0 - 15.0 / a; // stop locus for t_fail = 1 - (15/a) + 15/a = 1
            let t_fail = t + 15.0 / a;
            let s_star = 15.0 * t + 225.0 / (2.0 * a);
            let m = tau_c(t, s_star, &p, a, Motion::Moving).unwrap();
            let r = tau_c(t, s_star, &p, a, Motion::Stopped).unwrap();
            assert!((m - r).abs() < 1e-9 && (m - t_fail).abs() < 1e-9);
        }
    }

    #[test]
    fn dtau_c_examples() {
        let p = params(12.0, -3.0);
        for s in [1.0, 30.0, 90.0] {
            for a in [-1.0, -5.0] {
                assert_eq!(dtau_ds_c(9.0, s, &p, a, Motion::Stopped).unwrap(), 1.0 / 12.0);
            }
        }
        let d1 = dtau_ds_c(2.0, 20.0, &p, -1.0, Motion::Moving).unwrap();
        let d4 = dtau_ds_c(2.0, 20.0, &p, -4.0, Motion::Moving).unwrap();
        assert!((d1 / d4 - 2.0).abs() < 1e-12);
        assert!(matches!(dtau_ds_c(2.0, 24.0, &p, -1.0, Motion::Moving), Err(Error::Singular(_))));
        let h = 1e-4;
        let fd = (tau_c(2.0, 20.0 + h, &p, -4.0, Motion::Moving).unwrap()
            - tau_c(2.0, 20.0 - h, &p, -4.0, Motion::Moving).unwrap())
            / (2.0 * h);
        assert!(((fd - d4) / d4).abs() < 1e-4);
    }
}
