//! Prefix-integral solver.
//!
//! For every prediction-time row the penalty integral over failure times is
//! rewritten as an integral over arc length, weighted by the failure-time
//! density `|∂τ/∂s|`. The weighted integrals are accumulated once per row
//! into prefix arrays at the grid nodes; afterwards a candidate costs a few
//! lookups per row.
//!
//! Each prefix array is stored in the parameter of the trajectory family it
//! belongs to (failure time for the transition family, scaled time-to-go for
//! the braking parabola, arc length itself for stopped vehicles). Between two
//! grid nodes the field is linear in `s`, so the integral over a cell is the
//! parameter length times the field at the mean position over that parameter
//! range. This is the closed-form treatment of the `1/√·` density near the
//! singular points: in the family parameter the weight is 1.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{sample_row, PenaltyField};
use crate::kinematics::{envelope, quadratic_roots, stop_crossings, PlanParams};
use crate::plan::{candidate_set, select_optimum, CandidateEvaluation, PlanResult, Solver, Timings};
use crate::substitution::{moving_extremum_fail_time, rest_extremum_fail_time, RegimeCoefficients};

/// A monotone arc-length curve `s = f(p)` over a parameter `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Curve {
    /// `s = p`.
    Identity,
    /// `s = c - p²/2`: braking with unit deceleration, `p` the scaled
    /// time-to-go.
    Parabola { c: f64 },
    /// `s = a p² + b p + c`: the transition family with the cubic term
    /// dropped, `p` the failure time.
    Quadratic { a: f64, b: f64, c: f64 },
    /// `s = v0 p - v0² / (2 (a0 + κ p))`: the stop point of the transition
    /// family.
    Rest { v0: f64, a0: f64, kappa: f64 },
}

impl Curve {
    #[inline]
    fn pos(&self, p: f64) -> f64 {
        match *self {
            Curve::Identity => p,
            Curve::Parabola { c } => c - 0.5 * p * p,
            Curve::Quadratic { a, b, c } => (a * p + b) * p + c,
            Curve::Rest { v0, a0, kappa } => v0 * p - v0 * v0 / (2.0 * (a0 + kappa * p)),
        }
    }

    /// Mean of `f` over `[p0, p1]`.
    #[inline]
    fn mean(&self, p0: f64, p1: f64) -> f64 {
        match *self {
            Curve::Identity => 0.5 * (p0 + p1),
            Curve::Parabola { c } => c - (p0 * p0 + p0 * p1 + p1 * p1) / 6.0,
            Curve::Quadratic { a, b, c } => c + 0.5 * b * (p0 + p1) + a * (p0 * p0 + p0 * p1 + p1 * p1) / 3.0,
            Curve::Rest { v0, a0, kappa } => {
                let dp = p1 - p0;
                if dp == 0.0 {
                    return self.pos(p0);
                }
                let alpha0 = a0 + kappa * p0;
                let log_ratio = (kappa * dp / alpha0).ln_1p();
                0.5 * v0 * (p0 + p1) - v0 * v0 / (2.0 * kappa) * log_ratio / dp
            }
        }
    }

    /// Parameter in `[p0, p1]` at which the curve passes `s`.
    fn inverse(&self, s: f64, p0: f64, p1: f64) -> f64 {
        let roots = match *self {
            Curve::Identity => return s,
            Curve::Parabola { c } => return (2.0 * (c - s)).max(0.0).sqrt(),
            Curve::Quadratic { a, b, c } => quadratic_roots(a, b, c - s),
            Curve::Rest { v0, a0, kappa } => {
                quadratic_roots(2.0 * v0 * kappa, 2.0 * v0 * a0 - 2.0 * kappa * s, -v0 * v0 - 2.0 * a0 * s)
            }
        };
        let dist = |r: f64| (p0 - r).max(r - p1).max(0.0);
        match roots.into_iter().flatten().min_by(|x, y| dist(*x).total_cmp(&dist(*y))) {
            Some(r) => r.clamp(p0, p1),
            // only reachable through rounding at an extremum
            None => {
                if (self.pos(p0) - s).abs() <= (self.pos(p1) - s).abs() {
                    p0
                } else {
                    p1
                }
            }
        }
    }
}

/// Linear interpolation inside cell `cell` at weight `lambda`; zero off the
/// field.
#[inline]
fn cell_value(row: &[f64], cell: i64, lambda: f64) -> f64 {
    if cell < 0 || cell >= row.len() as i64 - 1 {
        return 0.0;
    }
    let c = cell as usize;
    row[c] + lambda * (row[c + 1] - row[c])
}

/// How the grid-node crossings of a segment are numbered. Segments that share
/// a numbering can answer a lookup prepared once for all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Numbering {
    Own,
    /// Arc-length nodes `j Δs`, numbered by `j`.
    Grid,
    /// Crossings of the `id`-th shared stop-point layout.
    Shared(usize),
}

/// A lookup point prepared for every segment of one numbering: the number
/// of crossings at or before `x`, the last of them, and the cell holding the
/// mean position between that crossing and `x`.
#[derive(Debug, Clone, Copy)]
struct Probe {
    numbering: Numbering,
    x: f64,
    rank: i64,
    from: f64,
    cell: i64,
    lambda: f64,
}

impl Probe {
    fn grid(s: f64, ds: f64) -> Self {
        let node = (s / ds).floor();
        let from = node * ds;
        Self {
            numbering: Numbering::Grid,
            x: s,
            rank: node as i64 + 1,
            from,
            cell: node as i64,
            lambda: 0.5 * (s + from) / ds - node,
        }
    }
}

/// Where a monotone curve crosses the grid nodes over `[p0, p1]`, and for
/// each interval between crossings the cell holding its mean position. It
/// does not depend on the field values, so curves that are the same in
/// every row are laid out once.
#[derive(Debug, Clone)]
struct Layout {
    curve: Curve,
    p0: f64,
    p1: f64,
    increasing: bool,
    first_node: i64,
    numbering: Numbering,
    /// Rank of the first own crossing within the numbering.
    rank_offset: i64,
    node_p: Vec<f64>,
    /// One entry per interval, `node_p.len() + 1` in total.
    cells: Vec<i64>,
    lambdas: Vec<f64>,
}

impl Layout {
    fn new(curve: Curve, p0: f64, p1: f64, ds: f64, last_col: i64) -> Self {
        let p1 = p1.max(p0);
        let (s0, s1) = (curve.pos(p0), curve.pos(p1));
        let increasing = s1 >= s0;
        let (first_node, count) = if increasing {
            let first = (s0 / ds).floor() as i64 + 1;
            let last = ((s1 / ds).floor() as i64).min(last_col);
            (first, (last - first + 1).max(0))
        } else {
            let first = ((s0 / ds).ceil() as i64 - 1).min(last_col);
            let last = ((s1 / ds).ceil() as i64).max(0);
            (first, (first - last + 1).max(0))
        };
        let n = count as usize;
        let mut layout = Self {
            curve,
            p0,
            p1,
            increasing,
            first_node,
            numbering: if curve == Curve::Identity { Numbering::Grid } else { Numbering::Own },
            rank_offset: first_node,
            node_p: Vec::with_capacity(n),
            cells: Vec::with_capacity(n + 1),
            lambdas: Vec::with_capacity(n + 1),
        };
        let mut prev = p0;
        for k in 0..count {
            let j = if increasing { first_node + k } else { first_node - k };
            let p = curve.inverse(j as f64 * ds, p0, p1).clamp(prev, p1);
            layout.push_interval(k, curve.mean(prev, p), ds);
            layout.node_p.push(p);
            prev = p;
        }
        layout.push_interval(count, curve.mean(prev, p1), ds);
        layout
    }

    fn cell_of(&self, interval: i64) -> i64 {
        if self.increasing {
            self.first_node + interval - 1
        } else {
            self.first_node - interval
        }
    }

    fn push_interval(&mut self, interval: i64, mean: f64, ds: f64) {
        let cell = self.cell_of(interval);
        self.cells.push(cell);
        self.lambdas.push(mean / ds - cell as f64);
    }

    /// The layout restricted to `[p0, p1]`, reusing the interior crossings.
    fn sub(&self, p0: f64, p1: f64, ds: f64) -> Self {
        let p0 = p0.clamp(self.p0, self.p1);
        let p1 = p1.clamp(p0, self.p1);
        let i0 = self.node_p.partition_point(|&p| p <= p0);
        let i1 = self.node_p.partition_point(|&p| p <= p1);
        let offset = i0 as i64;
        let mut out = Self {
            curve: self.curve,
            p0,
            p1,
            increasing: self.increasing,
            first_node: if self.increasing { self.first_node + offset } else { self.first_node - offset },
            numbering: self.numbering,
            rank_offset: self.rank_offset + offset,
            node_p: self.node_p[i0..i1].to_vec(),
            cells: Vec::with_capacity(i1 - i0 + 1),
            lambdas: Vec::with_capacity(i1 - i0 + 1),
        };
        if i1 == i0 {
            out.push_interval(0, self.curve.mean(p0, p1), ds);
            return out;
        }
        out.push_interval(0, self.curve.mean(p0, self.node_p[i0]), ds);
        out.cells.extend_from_slice(&self.cells[i0 + 1..i1]);
        out.lambdas.extend_from_slice(&self.lambdas[i0 + 1..i1]);
        out.push_interval((i1 - i0) as i64, self.curve.mean(self.node_p[i1 - 1], p1), ds);
        out
    }

    fn shared(mut self, id: usize) -> Self {
        self.numbering = Numbering::Shared(id);
        self.rank_offset = 0;
        self
    }

    /// Probe at `x`, or `None` outside the layout.
    fn probe(&self, x: f64, ds: f64) -> Option<Probe> {
        if !(x >= self.p0 && x <= self.p1) {
            return None;
        }
        let k = self.node_p.partition_point(|&p| p <= x);
        let from = if k == 0 { self.p0 } else { self.node_p[k - 1] };
        let cell = self.cell_of(k as i64);
        Some(Probe {
            numbering: self.numbering,
            x,
            rank: self.rank_offset + k as i64,
            from,
            cell,
            lambda: self.curve.mean(from, x) / ds - cell as f64,
        })
    }

    fn accumulate(self, row: &[f64]) -> Segment {
        let n = self.node_p.len();
        let mut prefix = Vec::with_capacity(n);
        let mut prev = self.p0;
        let mut acc = 0.0;
        for k in 0..n {
            let p = self.node_p[k];
            acc += (p - prev) * cell_value(row, self.cells[k], self.lambdas[k]);
            prefix.push(acc);
            prev = p;
        }
        let total = acc + (self.p1 - prev) * cell_value(row, self.cells[n], self.lambdas[n]);
        Segment {
            curve: self.curve,
            p0: self.p0,
            p1: self.p1,
            increasing: self.increasing,
            first_node: self.first_node,
            numbering: self.numbering,
            rank_offset: self.rank_offset,
            node_p: self.node_p,
            prefix,
            total,
        }
    }
}

/// Prefix integrals `∫ W(f(q)) dq` from `p0` to each grid node crossed by a
/// monotone curve.
#[derive(Debug, Clone)]
struct Segment {
    curve: Curve,
    p0: f64,
    p1: f64,
    increasing: bool,
    first_node: i64,
    numbering: Numbering,
    rank_offset: i64,
    node_p: Vec<f64>,
    prefix: Vec<f64>,
    total: f64,
}

impl Segment {
    fn empty() -> Self {
        Self {
            curve: Curve::Identity,
            p0: 0.0,
            p1: 0.0,
            increasing: true,
            first_node: 0,
            numbering: Numbering::Own,
            rank_offset: 0,
            node_p: Vec::new(),
            prefix: Vec::new(),
            total: 0.0,
        }
    }

    fn build(curve: Curve, p0: f64, p1: f64, row: &[f64], ds: f64) -> Self {
        Layout::new(curve, p0, p1, ds, row.len() as i64 - 1).accumulate(row)
    }

    /// `∫_{p0}^{x} W(f(q)) dq`, with `x` clamped into the segment.
    #[inline]
    fn integral_to(&self, row: &[f64], ds: f64, x: f64) -> f64 {
        let x = x.clamp(self.p0, self.p1);
        let n = self.node_p.len();
        let s = self.curve.pos(x);
        let guess = if self.increasing {
            (s / ds).floor() as i64 - self.first_node + 1
        } else {
            self.first_node - (s / ds).ceil() as i64 + 1
        };
        let mut k = guess.clamp(0, n as i64) as usize;
        while k > 0 && self.node_p[k - 1] > x {
            k -= 1;
        }
        while k < n && self.node_p[k] <= x {
            k += 1;
        }
        let (base, from) = if k == 0 { (0.0, self.p0) } else { (self.prefix[k - 1], self.node_p[k - 1]) };
        base + (x - from) * sample_row(row, ds, self.curve.mean(from, x))
    }

    /// Same as `integral_to(probe.x)`, without the search when the probe
    /// shares this segment's numbering and lands past its first crossing.
    #[inline]
    fn integral_at(&self, row: &[f64], ds: f64, probe: &Probe) -> f64 {
        if probe.numbering == self.numbering && probe.x >= self.p0 && probe.x <= self.p1 {
            let k = probe.rank - self.rank_offset;
            if k >= 1 && k <= self.node_p.len() as i64 {
                let base = self.prefix[k as usize - 1];
                return base + (probe.x - probe.from) * cell_value(row, probe.cell, probe.lambda);
            }
        }
        self.integral_to(row, ds, probe.x)
    }
}

/// The transition family towards one side of `a_prev`, split into pieces
/// on which the position is monotone in the failure time.
#[derive(Debug, Clone, Default)]
struct TransitionSide {
    pieces: Vec<Segment>,
    /// Integral over all earlier pieces.
    offsets: Vec<f64>,
}

impl TransitionSide {
    #[allow(clippy::too_many_arguments)]
    fn build(t: f64, v0: f64, a_prev: f64, kappa: f64, t_end: f64, rest: &[Layout], row: &[f64], ds: f64) -> Self {
        if !(t_end > 0.0) {
            return Self::default();
        }
        let co = RegimeCoefficients::new(t, v0, a_prev, kappa);
        let mut cuts = vec![0.0, t_end];
        let inner = stop_crossings(t, v0, a_prev, kappa)
            .into_iter()
            .flatten()
            .chain(moving_extremum_fail_time(t, a_prev, kappa))
            .chain(rest_extremum_fail_time(v0, a_prev, kappa));
        cuts.extend(inner.filter(|&x| x > 0.0 && x < t_end));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut side = Self::default();
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let (p0, p1) = (w[0], w[1]);
            let mid = 0.5 * (p0 + p1);
            let t_stop = mid - v0 / (a_prev + kappa * mid);
            let seg = if t < t_stop {
                Segment::build(Curve::Quadratic { a: co.alpha_m, b: co.beta_m, c: co.gamma_m }, p0, p1, row, ds)
            } else {
                match rest.iter().find(|l| l.p0 <= mid && mid <= l.p1) {
                    Some(l) => l.sub(p0, p1, ds).accumulate(row),
                    None => Segment::build(Curve::Rest { v0, a0: a_prev, kappa }, p0, p1, row, ds),
                }
            };
            side.offsets.push(acc);
            acc += seg.total;
            side.pieces.push(seg);
        }
        side
    }

    /// `∫_0^{x} W dτ` along the family.
    fn integral_to(&self, row: &[f64], ds: f64, x: f64) -> f64 {
        if x <= 0.0 || self.pieces.is_empty() {
            return 0.0;
        }
        let i = self.pieces.iter().position(|p| x <= p.p1).unwrap_or(self.pieces.len() - 1);
        self.offsets[i] + self.pieces[i].integral_to(row, ds, x)
    }

    fn integral_at(&self, row: &[f64], ds: f64, probe: &Probe) -> f64 {
        let x = probe.x;
        if x <= 0.0 || self.pieces.is_empty() {
            return 0.0;
        }
        let i = self.pieces.iter().position(|p| x <= p.p1).unwrap_or(self.pieces.len() - 1);
        self.offsets[i] + self.pieces[i].integral_at(row, ds, probe)
    }

    fn node_count(&self) -> usize {
        self.pieces.iter().map(|p| p.node_p.len()).sum()
    }
}

struct Probes {
    b: Probe,
    rest_lo: Probe,
    rest_end: Probe,
}

#[derive(Debug, Clone)]
struct RowTables {
    row: usize,
    t: f64,
    window: (f64, f64),
    gentler: TransitionSide,
    stronger: TransitionSide,
    rest: Segment,
    moving: Segment,
}

/// Per-row prefix integrals for one field and planning state, valid for any
/// candidate in the deceleration range they were built for.
#[derive(Debug, Clone)]
pub struct RegionAntiderivatives<'f> {
    field: &'f PenaltyField,
    params: PlanParams,
    candidates: Vec<f64>,
    a_lo: f64,
    a_hi: f64,
    sides: [SideSpec; 2],
    rows: Vec<RowTables>,
}

/// Number of prediction rows used for a field: `t = m Δt`, `1 ≤ m ≤ M`.
pub fn row_count(field: &PenaltyField, params: &PlanParams) -> usize {
    let by_horizon = (params.t_hzn / field.dt() + 1e-9).floor() as usize;
    by_horizon.min(field.n_t() - 1)
}

pub(crate) fn check_grid(field: &PenaltyField, params: &PlanParams) -> Result<()> {
    params.validate()?;
    if field.t0() != 0.0 {
        return Err(Error::Config(format!("field must start at t0 = 0, got {}", field.t0())));
    }
    if row_count(field, params) == 0 {
        return Err(Error::Config("field has no prediction row within the horizon".into()));
    }
    Ok(())
}

/// Stop points of one transition family over `[0, t_end]`, laid out on the
/// grid once for all rows, one layout per monotone stretch.
fn rest_layouts(params: &PlanParams, kappa: f64, t_end: f64, field: &PenaltyField, first_id: usize) -> Vec<Layout> {
    if !(t_end > 0.0) || params.v0 == 0.0 {
        return Vec::new();
    }
    let curve = Curve::Rest { v0: params.v0, a0: params.a_prev, kappa };
    let mut cuts = vec![0.0, t_end];
    if let Some(x) = rest_extremum_fail_time(params.v0, params.a_prev, kappa) {
        if x > 0.0 && x < t_end {
            cuts.insert(1, x);
        }
    }
    let last_col = field.n_s() as i64 - 1;
    cuts.windows(2)
        .enumerate()
        .map(|(i, w)| Layout::new(curve, w[0], w[1], field.ds(), last_col).shared(first_id + i))
        .collect()
}

#[derive(Debug, Clone)]
struct SideSpec {
    kappa: f64,
    t_end: f64,
    rest: Vec<Layout>,
}

#[allow(clippy::too_many_arguments)]
fn build_row(
    field: &PenaltyField,
    params: &PlanParams,
    sides: &[SideSpec; 2],
    m: usize,
    a_lo: f64,
    a_hi: f64,
    lower: f64,
    upper: f64,
) -> RowTables {
    let t = m as f64 * field.dt();
    let row = field.row(m);
    let ds = field.ds();
    let mut tables = RowTables {
        row: m,
        t,
        window: (lower, upper),
        gentler: TransitionSide::default(),
        stronger: TransitionSide::default(),
        rest: Segment::empty(),
        moving: Segment::empty(),
    };
    let v0 = params.v0;
    if v0 == 0.0 {
        return tables;
    }
    let a_prev = params.a_prev;
    let dt_plan = params.dt_plan;
    let [g, st] = sides;
    tables.gentler = TransitionSide::build(t, v0, a_prev, g.kappa, g.t_end, &g.rest, row, ds);
    tables.stronger = TransitionSide::build(t, v0, a_prev, st.kappa, st.t_end, &st.rest, row, ds);

    let gentlest = a_hi.max(a_prev);
    let s_lo = lower.max(v0 * v0 / (2.0 * -a_lo));
    let s_hi = upper.min(v0 * dt_plan + v0 * v0 / (2.0 * -gentlest));
    tables.rest = Segment::build(Curve::Identity, s_lo, s_hi.max(s_lo), row, ds);

    let c = v0 * t;
    let p_lo = (-gentlest).sqrt() * (t - t.min(dt_plan));
    let p_hi = (2.0 * (c - lower).max(0.0)).sqrt().min((-a_lo).sqrt() * t).min(v0 / (-gentlest).sqrt());
    tables.moving = Segment::build(Curve::Parabola { c }, p_lo, p_hi.max(p_lo), row, ds);
    tables
}

/// Builds the per-row tables. The candidate range is taken from the
/// (possibly truncated) candidate set, so a braking-distance cap also
/// narrows the arc-length windows.
pub fn precompute<'f>(field: &'f PenaltyField, params: &PlanParams) -> Result<RegionAntiderivatives<'f>> {
    precompute_with(field, params, false)
}

pub fn precompute_with<'f>(
    field: &'f PenaltyField,
    params: &PlanParams,
    parallel: bool,
) -> Result<RegionAntiderivatives<'f>> {
    check_grid(field, params)?;
    if field.dt() <= params.t_valve_max() {
        return Err(Error::Config(format!(
            "row spacing {} s must exceed the longest valve transition {} s",
            field.dt(),
            params.t_valve_max()
        )));
    }
    let candidates = candidate_set(params)?;
    let a_lo = candidates.iter().copied().fold(f64::INFINITY, f64::min).min(params.a_prev);
    let a_hi = candidates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_rows = row_count(field, params);
    let env_params = PlanParams { a_min: a_lo, a_max: a_hi.max(params.a_prev), ..*params };
    let env = envelope(&env_params, field.dt(), n_rows + 1);
    let k = params.kappa_mag;
    let side = |kappa: f64, t_end: f64, id: usize| SideSpec {
        kappa,
        t_end,
        rest: rest_layouts(params, kappa, t_end, field, id),
    };
    let sides = [
        side(k, ((a_hi - params.a_prev) / k).min(params.dt_plan), 0),
        side(-k, ((params.a_prev - a_lo) / k).min(params.dt_plan), 2),
    ];
    let build = |m: usize| build_row(field, params, &sides, m, a_lo, a_hi, env.lower[m], env.upper[m]);
    let rows: Vec<RowTables> =
        if parallel { (1..=n_rows).into_par_iter().map(build).collect() } else { (1..=n_rows).map(build).collect() };
    Ok(RegionAntiderivatives { field, params: *params, candidates, a_lo, a_hi, sides, rows })
}

impl<'f> RegionAntiderivatives<'f> {
    pub fn params(&self) -> &PlanParams {
        &self.params
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Time of the `i`-th precomputed row (the first is `Δt`).
    pub fn row_time(&self, i: usize) -> f64 {
        self.rows[i].t
    }

    /// Reachable arc-length band of the `i`-th row.
    pub fn window(&self, i: usize) -> (f64, f64) {
        self.rows[i].window
    }

    /// Number of grid nodes stored over all rows; a measure of the work done.
    pub fn node_count(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.gentler.node_count() + r.stronger.node_count() + r.rest.node_p.len() + r.moving.node_p.len())
            .sum()
    }

    /// `∫ W ds` from the start of the stopped window up to `s`.
    pub fn rest_antiderivative(&self, i: usize, s: f64) -> f64 {
        let r = &self.rows[i];
        r.rest.integral_to(self.field.row(r.row), self.field.ds(), s)
    }

    /// `∫ W(u) / √(2 v0 t - 2u) du` from the start of the moving window up
    /// to `s`.
    pub fn moving_antiderivative(&self, i: usize, s: f64) -> f64 {
        let r = &self.rows[i];
        let row = self.field.row(r.row);
        let p = (2.0 * (self.params.v0 * r.t - s)).max(0.0).sqrt();
        let seg = &r.moving;
        seg.total - seg.integral_to(row, self.field.ds(), p)
    }

    /// `∫_0^{t_fail} W(t, σ̃(t, τ)) dτ` along the transition family of the
    /// given valve direction.
    pub fn transition_antiderivative(&self, i: usize, gentler: bool, t_fail: f64) -> f64 {
        let r = &self.rows[i];
        let side = if gentler { &r.gentler } else { &r.stronger };
        side.integral_to(self.field.row(r.row), self.field.ds(), t_fail)
    }

    /// Lookups that are the same in every row for one candidate.
    fn probes(&self, a_next: f64, t_valve: f64) -> Probes {
        let p = &self.params;
        let ds = self.field.ds();
        let t_b = t_valve.min(p.dt_plan);
        let side = if a_next > p.a_prev { &self.sides[0] } else { &self.sides[1] };
        let shared = side.rest.iter().find_map(|l| l.probe(t_b, ds));
        let generic = |x: f64| Probe { numbering: Numbering::Own, x, rank: 0, from: 0.0, cell: 0, lambda: 0.0 };
        let stop = |x: f64| p.v0 * x - p.v0 * p.v0 / (2.0 * a_next);
        Probes {
            b: shared.unwrap_or_else(|| generic(t_b)),
            rest_lo: Probe::grid(stop(t_valve), ds),
            rest_end: Probe::grid(stop(p.dt_plan), ds),
        }
    }

    /// Per-row `(B, C)` integrals over failure time for one candidate;
    /// `split_shift` moves the rest/moving seam in failure time.
    fn row_parts(&self, r: &RowTables, a_next: f64, t_valve: f64, probes: &Probes, split_shift: f64) -> (f64, f64) {
        let p = &self.params;
        let row = self.field.row(r.row);
        let ds = self.field.ds();
        let t = r.t;
        let t_b = t_valve.min(p.dt_plan);
        let t_up = t.min(p.dt_plan);
        let v0 = p.v0;
        if v0 == 0.0 {
            let w = sample_row(row, ds, 0.0);
            return (w * t_b, w * (t_up - t_b).max(0.0));
        }
        let pb = if a_next == p.a_prev {
            0.0
        } else {
            let side = if a_next > p.a_prev { &r.gentler } else { &r.stronger };
            side.integral_at(row, ds, &probes.b)
        };

        let (lo, hi) = (t_valve, t_up);
        if hi <= lo {
            return (pb, 0.0);
        }
        let t_cross = t + v0 / a_next + split_shift;
        let mut pc = 0.0;
        let rest_hi = t_cross.min(hi);
        if rest_hi > lo {
            let upper = if rest_hi == p.dt_plan {
                r.rest.integral_at(row, ds, &probes.rest_end)
            } else {
                r.rest.integral_to(row, ds, v0 * rest_hi - v0 * v0 / (2.0 * a_next))
            };
            pc += (upper - r.rest.integral_at(row, ds, &probes.rest_lo)) / v0;
        }
        let mov_lo = t_cross.max(lo);
        if hi > mov_lo {
            let k = (-a_next).sqrt();
            let d = r.moving.integral_to(row, ds, k * (t - mov_lo)) - r.moving.integral_to(row, ds, k * (t - hi));
            pc += d / k;
        }
        (pb, pc)
    }

    fn evaluate_shifted(&self, a_next: f64, split_shift: f64) -> Result<CandidateEvaluation> {
        let tol = 1e-9;
        if !(a_next >= self.a_lo - tol && a_next <= self.a_hi.max(self.params.a_prev) + tol) {
            return Err(Error::Parameter(format!(
                "a_next={a_next} outside the precomputed range [{}, {}]",
                self.a_lo, self.a_hi
            )));
        }
        let vt = self.params.transition(a_next);
        let probes = self.probes(a_next, vt.t_valve);
        let (mut pb, mut pc) = (0.0, 0.0);
        for r in &self.rows {
            let (b, c) = self.row_parts(r, a_next, vt.t_valve, &probes, split_shift);
            pb += b;
            pc += c;
        }
        let scale = self.field.dt() / self.params.dt_plan;
        let (p_b, p_c) = (pb * scale, pc * scale);
        Ok(CandidateEvaluation { a_next, p_b, p_c, total: p_b + p_c, t_valve: vt.t_valve })
    }

    /// Expected post-failure penalty of one candidate.
    pub fn evaluate_candidate(&self, a_next: f64) -> Result<CandidateEvaluation> {
        self.evaluate_shifted(a_next, 0.0)
    }
}

/// Picks `a*` from a full set of evaluations; a stationary vehicle keeps its
/// valve setting.
pub(crate) fn finish(
    solver: Solver,
    params: &PlanParams,
    evaluations: Vec<CandidateEvaluation>,
    timings: Timings,
    pre_fail: Option<f64>,
) -> PlanResult {
    let (idx, tie) = select_optimum(&evaluations, params.a_prev);
    let mut a_star = evaluations[idx].a_next;
    let mut tie_break_applied = tie;
    if params.v0 == 0.0 && evaluations.iter().any(|e| e.a_next == params.a_prev) {
        a_star = params.a_prev;
        tie_break_applied = evaluations.len() > 1;
    }
    PlanResult { solver, a_star, evaluations, tie_break_applied, timings, pre_fail, params: *params }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FastOptions {
    /// Build the row tables on the rayon thread pool.
    pub parallel: bool,
}

pub fn plan(field: &PenaltyField, params: &PlanParams) -> Result<PlanResult> {
    plan_with(field, params, FastOptions::default())
}

pub fn plan_with(field: &PenaltyField, params: &PlanParams, opts: FastOptions) -> Result<PlanResult> {
    let start = Instant::now();
    let pre = precompute_with(field, params, opts.parallel)?;
    let precompute_s = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let evaluations = pre.candidates.iter().map(|&a| pre.evaluate_candidate(a)).collect::<Result<Vec<_>>>()?;
    let mut result = finish(Solver::Fast, params, evaluations, Timings::default(), None);
    result.timings = Timings { precompute_s, evaluate_s: start.elapsed().as_secs_f64() };
    Ok(result)
}
