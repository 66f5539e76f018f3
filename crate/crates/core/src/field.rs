//! Penalty grid `W(t, s)` over prediction time and arc length.
//!
//! Rows are prediction-time samples `t0 + i * dt`, columns are arc-length
//! samples `j * ds`. Along `s` the field is linearly interpolated; outside the
//! modelled range it is zero. There is no interpolation along `t`: solvers
//! only ever read whole rows.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyField {
    t0: f64,
    dt: f64,
    ds: f64,
    n_t: usize,
    n_s: usize,
    values: Vec<f64>,
}

impl PenaltyField {
    /// Builds a field from row-major values, checking every invariant.
    pub fn new(t0: f64, dt: f64, ds: f64, n_t: usize, n_s: usize, values: Vec<f64>) -> Result<Self> {
        if n_t < 2 || n_s < 2 {
            return param(format!("field needs at least 2x2 cells, got {n_t}x{n_s}"));
        }
        if !(dt > 0.0 && dt.is_finite()) || !(ds > 0.0 && ds.is_finite()) {
            return param(format!("grid spacings must be positive, got dt={dt} ds={ds}"));
        }
        if !t0.is_finite() {
            return param("t0 must be finite");
        }
        if values.len() != n_t * n_s {
            return param(format!("expected {} values for a {n_t}x{n_s} field, got {}", n_t * n_s, values.len()));
        }
        if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return param(format!(
                "penalty at row {}, column {} is {} (must be finite and non-negative)",
                k / n_s,
                k % n_s,
                values[k]
            ));
        }
        Ok(Self { t0, dt, ds, n_t, n_s, values })
    }

    pub fn constant(dt: f64, ds: f64, n_t: usize, n_s: usize, value: f64) -> Result<Self> {
        Self::new(0.0, dt, ds, n_t, n_s, vec![value; n_t * n_s])
    }

    /// Builds a field by evaluating `f(t, s)` at every node.
    pub fn from_fn(dt: f64, ds: f64, n_t: usize, n_s: usize, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n_t * n_s);
        for i in 0..n_t {
            for j in 0..n_s {
                values.push(f(i as f64 * dt, j as f64 * ds));
            }
        }
        Self::new(0.0, dt, ds, n_t, n_s, values)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Arc length of the last column.
    pub fn s_extent(&self) -> f64 {
        (self.n_s - 1) as f64 * self.ds
    }

    pub fn row_time(&self, row: usize) -> f64 {
        self.t0 + row as f64 * self.dt
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_s + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_s..(row + 1) * self.n_s]
    }

    /// Penalty density at `row`, linearly interpolated along `s`.
    pub fn sample(&self, row: usize, s: f64) -> Result<f64> {
        if row >= self.n_t {
            return Err(Error::Index { row, n_t: self.n_t });
        }
        Ok(sample_row(self.row(row), self.ds, s))
    }

    /// Summary statistics `(min, max, mean)` over all cells.
    pub fn stats(&self) -> (f64, f64, f64) {
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        (lo, hi, sum / self.values.len() as f64)
    }
}

/// Linear interpolation of one field row; zero outside `[0, (n-1) ds]`.
#[inline]
pub fn sample_row(row: &[f64], ds: f64, s: f64) -> f64 {
    let x = s / ds;
    if !(x >= 0.0) {
        return 0.0;
    }
    let last = row.len() - 1;
    let j = x.floor() as usize;
    if j >= last {
        return if j == last && x == last as f64 { row[last] } else { 0.0 };
    }
    let lam = x - j as f64;
    row[j] + lam * (row[j + 1] - row[j])
}

/// Grid geometry shared by the synthetic generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub n_t: usize,
    pub n_s: usize,
    pub dt: f64,
    pub ds: f64,
}

impl GridShape {
    fn check(&self) -> Result<()> {
        if self.n_t < 2 || self.n_s < 2 {
            return param(format!("grid needs at least 2x2 cells, got {}x{}", self.n_t, self.n_s));
        }
        if !(self.dt > 0.0) || !(self.ds > 0.0) {
            return param("grid spacings must be positive");
        }
        Ok(())
    }
}

/// Random "Brownian" penalty field: a two-dimensional cumulative random walk,
/// box-smoothed over `smoothness` cells and rescaled into `[0, 1]`.
pub fn generate_brownian(seed: u64, shape: GridShape, smoothness: usize) -> Result<PenaltyField> {
    shape.check()?;
    if smoothness == 0 {
        return param("smoothness must be at least one cell");
    }
    let GridShape { n_t, n_s, .. } = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walk = vec![0.0f64; n_t * n_s];
    for i in 0..n_t {
        for j in 0..n_s {
            let step: f64 = StandardNormal.sample(&mut rng);
            let up = if i > 0 { walk[(i - 1) * n_s + j] } else { 0.0 };
            let left = if j > 0 { walk[i * n_s + j - 1] } else { 0.0 };
            let diag = if i > 0 && j > 0 { walk[(i - 1) * n_s + j - 1] } else { 0.0 };
            walk[i * n_s + j] = step + up + left - diag;
        }
    }
    let mut values = box_smooth(&walk, n_t, n_s, smoothness);
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    for v in &mut values {
        *v = if span > 0.0 { ((*v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
    }
    PenaltyField::new(0.0, shape.dt, shape.ds, n_t, n_s, values)
}

/// Mean over a `window x window` box (truncated at the borders), via a
/// summed-area table.
fn box_smooth(src: &[f64], n_t: usize, n_s: usize, window: usize) -> Vec<f64> {
    let w = n_s + 1;
    let mut sat = vec![0.0f64; (n_t + 1) * w];
    for i in 0..n_t {
        let mut run = 0.0;
        for j in 0..n_s {
            run += src[i * n_s + j];
            sat[(i + 1) * w + j + 1] = sat[i * w + j + 1] + run;
        }
    }
    let before = window / 2;
    let after = window - 1 - before;
    let mut out = vec![0.0; n_t * n_s];
    for i in 0..n_t {
        let (r0, r1) = (i.saturating_sub(before), (i + after).min(n_t - 1) + 1);
        for j in 0..n_s {
            let (c0, c1) = (j.saturating_sub(before), (j + after).min(n_s - 1) + 1);
            let sum = sat[r1 * w + c1] - sat[r0 * w + c1] - sat[r1 * w + c0] + sat[r0 * w + c0];
            out[i * n_s + j] = sum / ((r1 - r0) * (c1 - c0)) as f64;
        }
    }
    out
}

/// A rectangular penalty band moving along `s` at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingBand {
    /// Band centre at `t = 0`.
    pub s0: f64,
    pub speed: f64,
    pub width: f64,
    pub weight: f64,
}

/// An arc-length interval that is penalised at every prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticZone {
    pub s_from: f64,
    pub s_to: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub bands: Vec<MovingBand>,
    #[serde(default)]
    pub zones: Vec<StaticZone>,
}

/// Rasterises a scenario onto the grid. Contributions add up and the sum is
/// clamped into `[0, 1]`.
pub fn generate_scenario(spec: &ScenarioSpec, shape: GridShape) -> Result<PenaltyField> {
    shape.check()?;
    for b in &spec.bands {
        if !(b.weight >= 0.0) || !(b.width >= 0.0) {
            return param(format!("band at s0={} has negative weight or width", b.s0));
        }
    }
    for z in &spec.zones {
        if !(z.weight >= 0.0) {
            return param(format!("zone [{}, {}] has negative weight", z.s_from, z.s_to));
        }
    }
    let eps = 1e-9 * shape.ds;
    PenaltyField::from_fn(shape.dt, shape.ds, shape.n_t, shape.n_s, |t, s| {
        let mut w = 0.0;
        for b in &spec.bands {
            let c = b.s0 + b.speed * t;
            if (s - c).abs() <= 0.5 * b.width + eps {
                w += b.weight;
            }
        }
        for z in &spec.zones {
            if s >= z.s_from - eps && s <= z.s_to + eps {
                w += z.weight;
            }
        }
        w.clamp(0.0, 1.0)
    })
}

/// Writes the field as `# t0=.. dt=.. ds=.. nt=.. ns=..` followed by one
/// comma-separated line per row.
pub fn write_csv(field: &PenaltyField, path: impl AsRef<Path>) -> Result<()> {
    let mut out = fs::File::create(path)?;
    out.write_all(to_csv_string(field).as_bytes())?;
    Ok(())
}

pub fn to_csv_string(field: &PenaltyField) -> String {
    let mut s = String::with_capacity(field.values.len() * 8);
    let _ = writeln!(s, "# t0={} dt={} ds={} nt={} ns={}", field.t0, field.dt, field.ds, field.n_t, field.n_s);
    for i in 0..field.n_t {
        for (j, v) in field.row(i).iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<PenaltyField> {
    from_csv_reader(fs::File::open(path)?)
}

pub fn from_csv_reader(reader: impl Read) -> Result<PenaltyField> {
    let fmt = |line: usize, msg: String| Error::Format { line, msg };
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().ok_or_else(|| fmt(1, "empty file".into()))??;
    let header = header.trim().strip_prefix('#').ok_or_else(|| fmt(1, "header must start with '#'".into()))?;

    let (mut t0, mut dt, mut ds, mut nt, mut ns) = (None, None, None, None, None);
    for tok in header.split_whitespace() {
        let (key, val) = tok.split_once('=').ok_or_else(|| fmt(1, format!("malformed header token '{tok}'")))?;
        let bad = || fmt(1, format!("cannot parse header value '{tok}'"));
        match key {
            "t0" => t0 = Some(val.parse::<f64>().map_err(|_| bad())?),
            "dt" => dt = Some(val.parse::<f64>().map_err(|_| bad())?),
            "ds" => ds = Some(val.parse::<f64>().map_err(|_| bad())?),
            "nt" => nt = Some(val.parse::<usize>().map_err(|_| bad())?),
            "ns" => ns = Some(val.parse::<usize>().map_err(|_| bad())?),
            _ => return Err(fmt(1, format!("unknown header key '{key}'"))),
        }
    }
    let missing = |k: &str| fmt(1, format!("header is missing '{k}'"));
    let (t0, dt, ds) =
        (t0.ok_or_else(|| missing("t0"))?, dt.ok_or_else(|| missing("dt"))?, ds.ok_or_else(|| missing("ds"))?);
    let (nt, ns) = (nt.ok_or_else(|| missing("nt"))?, ns.ok_or_else(|| missing("ns"))?);

    let mut values = Vec::with_capacity(nt * ns);
    let mut rows = 0usize;
    let mut line_no = 1usize;
    for line in lines {
        line_no += 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if rows == nt {
            return Err(fmt(line_no, format!("more than the declared {nt} rows")));
        }
        let before = values.len();
        for cell in line.split(',') {
            let v: f64 =
                cell.trim().parse().map_err(|_| fmt(line_no, format!("cannot parse '{}' as a number", cell.trim())))?;
            if !v.is_finite() || v < 0.0 {
                return Err(fmt(line_no, format!("penalty {v} is not finite and non-negative")));
            }
            values.push(v);
        }
        if values.len() - before != ns {
            return Err(fmt(line_no, format!("expected {ns} values, found {}", values.len() - before)));
        }
        rows += 1;
    }
    if rows != nt {
        return Err(fmt(line_no + 1, format!("header declares {nt} rows but the file has {rows}")));
    }
    PenaltyField::new(t0, dt, ds, nt, ns, values).map_err(|e| fmt(1, e.to_string()))
}

/// Trajectories to draw over a field image, given as arc length per row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryFan {
    pub paths: Vec<Vec<f64>>,
}

/// Encodes the field as an 8-bit binary PGM (row 0 at the top). Overlay
/// samples are drawn at full intensity.
pub fn encode_pgm(field: &PenaltyField, overlay: Option<&TrajectoryFan>) -> Vec<u8> {
    let (w, h) = (field.n_s, field.n_t);
    let mut pixels: Vec<u8> = field.values.iter().map(|v| (255.0 * v.clamp(0.0, 1.0)).round() as u8).collect();
    if let Some(fan) = overlay {
        for path in &fan.paths {
            for (row, &s) in path.iter().enumerate().take(h) {
                let col = (s / field.ds).round();
                if col >= 0.0 && (col as usize) < w {
                    pixels[row * w + col as usize] = 255;
                }
            }
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    out
}

pub fn render_pgm(field: &PenaltyField, overlay: Option<&TrajectoryFan>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(field, overlay))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n_t: usize, n_s: usize, dt: f64, ds: f64) -> GridShape {
        GridShape { n_t, n_s, dt, ds }
    }

    #[test]
    fn sample_interpolates_linearly() {
        let f = PenaltyField::from_fn(0.1, 1.0, 2, 5, |_, s| if s == 1.0 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(f.sample(0, 0.5).unwrap(), 0.5);
        assert_eq!(f.sample(0, 1.0).unwrap(), 1.0);
        assert_eq!(f.sample(0, 1.25).unwrap(), 0.75);
    }

    #[test]
    fn sample_is_zero_outside() {
        let f = PenaltyField::constant(0.1, 0.5, 3, 4, 1.0).unwrap();
        assert_eq!(f.sample(1, -3.0).unwrap(), 0.0);
        assert_eq!(f.sample(1, 1.5).unwrap(), 1.0);
        assert_eq!(f.sample(1, 1.5000001).unwrap(), 0.0);
        assert_eq!(f.sample(2, 0.0).unwrap(), 1.0);
        assert_eq!(f.sample(1, f64::NAN).unwrap(), 0.0);
    }

    #[test]
    fn sample_constant_field() {
        let f = PenaltyField::constant(0.1, 0.25, 4, 9, 1.0).unwrap();
        for row in 0..4 {
            for k in 0..=80 {
                assert_eq!(f.sample(row, k as f64 * 0.025).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn sample_rejects_bad_row() {
        let f = PenaltyField::constant(0.1, 0.25, 4, 9, 1.0).unwrap();
        assert!(matches!(f.sample(4, 0.0), Err(Error::Index { row: 4, n_t: 4 })));
    }

    #[test]
    fn construction_checks_invariants() {
        assert!(PenaltyField::new(0.0, 0.1, 0.25, 1, 4, vec![0.0; 4]).is_err());
        assert!(PenaltyField::new(0.0, 0.0, 0.25, 2, 2, vec![0.0; 4]).is_err());
        assert!(PenaltyField::new(0.0, 0.1, 0.25, 2, 2, vec![0.0, -1.0, 0.0, 0.0]).is_err());
        assert!(PenaltyField::new(0.0, 0.1, 0.25, 2, 2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(PenaltyField::new(0.0, 0.1, 0.25, 2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn brownian_is_deterministic_and_normalised() {
        let a = generate_brownian(7, shape(30, 50, 0.1, 0.25), 4).unwrap();
        let b = generate_brownian(7, shape(30, 50, 0.1, 0.25), 4).unwrap();
        assert_eq!(a.values(), b.values());
        let (lo, hi, _) = a.stats();
        assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        let c = generate_brownian(8, shape(30, 50, 0.1, 0.25), 4).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn brownian_rejects_bad_parameters() {
        assert!(generate_brownian(1, shape(0, 10, 0.1, 0.25), 2).is_err());
        assert!(generate_brownian(1, shape(10, 10, 0.1, 0.25), 0).is_err());
    }

    #[test]
    fn box_smooth_of_constant_is_constant() {
        let src = vec![3.0; 12];
        assert!(box_smooth(&src, 3, 4, 3).iter().all(|v| (v - 3.0).abs() < 1e-12));
        let impulse = {
            let mut v = vec![0.0; 25];
            v[12] = 9.0;
            v
        };
        let out = box_smooth(&impulse, 5, 5, 3);
        assert!((out[12] - 1.0).abs() < 1e-12);
        assert!((out[6] - 1.0).abs() < 1e-12);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn empty_scenario_is_zero() {
        let f = generate_scenario(&ScenarioSpec::default(), shape(5, 10, 0.1, 1.0)).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn static_zone_rasterisation() {
        let spec =
            ScenarioSpec { zones: vec![StaticZone { s_from: 40.0, s_to: 50.0, weight: 1.0 }], ..Default::default() };
        let f = generate_scenario(&spec, shape(4, 240, 0.1, 0.25)).unwrap();
        for i in 0..4 {
            for j in 0..240 {
                let s = j as f64 * 0.25;
                let expect = if (40.0..=50.0).contains(&s) { 1.0 } else { 0.0 };
                assert_eq!(f.value(i, j), expect, "row {i} col {j}");
            }
        }
    }

    #[test]
    fn moving_band_rasterisation() {
        let spec = ScenarioSpec {
            bands: vec![MovingBand { s0: 20.0, speed: 10.0, width: 0.0, weight: 1.0 }],
            ..Default::default()
        };
        let f = generate_scenario(&spec, shape(3, 200, 0.1, 0.25)).unwrap();
        let lit: Vec<usize> = (0..200).filter(|&j| f.value(1, j) > 0.0).collect();
        assert_eq!(lit, vec![84]); // 21 m / 0.25 m
        let lit0: Vec<usize> = (0..200).filter(|&j| f.value(0, j) > 0.0).collect();
        assert_eq!(lit0, vec![80]);
    }

    #[test]
    fn scenario_rejects_negative_weight() {
        let spec =
            ScenarioSpec { zones: vec![StaticZone { s_from: 1.0, s_to: 2.0, weight: -0.5 }], ..Default::default() };
        assert!(generate_scenario(&spec, shape(3, 10, 0.1, 1.0)).is_err());
    }

    #[test]
    fn overlapping_contributions_are_clamped() {
        let spec = ScenarioSpec {
            zones: vec![
                StaticZone { s_from: 0.0, s_to: 5.0, weight: 0.75 },
                StaticZone { s_from: 3.0, s_to: 9.0, weight: 0.75 },
            ],
            ..Default::default()
        };
        let f = generate_scenario(&spec, shape(2, 10, 0.1, 1.0)).unwrap();
        assert_eq!(f.value(0, 1), 0.75);
        assert_eq!(f.value(0, 4), 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let f = generate_brownian(3, shape(6, 11, 0.1, 0.25), 2).unwrap();
        let g = from_csv_reader(to_csv_string(&f).as_bytes()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn csv_row_count_mismatch() {
        let text = "# t0=0 dt=0.1 ds=1 nt=3 ns=2\n0,1\n1,0\n";
        match from_csv_reader(text.as_bytes()) {
            Err(Error::Format { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("3 rows"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_negative_cell_names_line() {
        let text = "# t0=0 dt=0.1 ds=1 nt=2 ns=2\n0,1\n1,-0.5\n";
        assert!(matches!(from_csv_reader(text.as_bytes()), Err(Error::Format { line: 3, .. })));
    }

    #[test]
    fn csv_malformed_header_and_rows() {
        for text in [
            "t0=0 dt=0.1 ds=1 nt=2 ns=2\n0,1\n1,0\n",
            "# t0=0 dt=0.1 ds=1 nt=2\n0,1\n1,0\n",
            "# t0=0 dt=x ds=1 nt=2 ns=2\n0,1\n1,0\n",
            "# t0=0 dt=0.1 ds=1 nt=2 ns=2 foo=1\n0,1\n1,0\n",
        ] {
            assert!(matches!(from_csv_reader(text.as_bytes()), Err(Error::Format { line: 1, .. })), "{text}");
        }
        let short_row = "# t0=0 dt=0.1 ds=1 nt=2 ns=3\n0,1,2\n1,0\n";
        assert!(matches!(from_csv_reader(short_row.as_bytes()), Err(Error::Format { line: 3, .. })));
        let extra = "# t0=0 dt=0.1 ds=1 nt=1 ns=2\n0,1\n1,0\n";
        assert!(from_csv_reader(extra.as_bytes()).is_err());
    }

    #[test]
    fn pgm_black_and_white() {
        let zero = PenaltyField::constant(0.1, 0.25, 3, 5, 0.0).unwrap();
        let img = encode_pgm(&zero, None);
        let header = b"P5\n5 3\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert!(img[header.len()..].iter().all(|&p| p == 0));
        assert_eq!(img.len(), header.len() + 15);

        let one = PenaltyField::constant(0.1, 0.25, 3, 5, 1.0).unwrap();
        assert!(encode_pgm(&one, None)[header.len()..].iter().all(|&p| p == 255));
    }

    #[test]
    fn pgm_overlay_marks_trajectory() {
        let f = PenaltyField::constant(0.1, 0.5, 4, 10, 0.0).unwrap();
        // constant-speed path at 15 m/s sampled every 0.1 s
        let fan = TrajectoryFan { paths: vec![(0..4).map(|i| 15.0 * 0.1 * i as f64).collect()] };
        let img = encode_pgm(&f, Some(&fan));
        let body = &img[b"P5\n10 4\n255\n".len()..];
        assert_eq!(body[10 + 3], 255);
        assert_eq!(body[10 + 2], 0);
        assert_eq!(body[0], 255);
        // row 3 would be at s = 4.5 m, column 9
        assert_eq!(body[30 + 9], 255);
    }
}
