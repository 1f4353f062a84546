//! Càdlàg step paths on `[0, T]`.
//!
//! A [`CadlagPath`] stores one value per point of a [`TimeGrid`] and is read
//! as a right-continuous step function: the value at `t` is the value at the
//! largest grid point `<= t`. Continuous processes are represented by fine
//! sampling.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{domain, Result, StopLabError};
use crate::numeric::RangeExtrema;

const HORIZON_RTOL: f64 = 1e-12;

fn same_horizon(a: f64, b: f64) -> bool {
    (a - b).abs() <= HORIZON_RTOL * a.abs().max(b.abs())
}

/// Strictly increasing times `0 = t_0 < ... < t_k = T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return domain("a time grid needs at least the points 0 and T");
        }
        if points[0] != 0.0 {
            return domain(format!("time grid must start at 0, got {}", points[0]));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return domain("time grid contains a non-finite point");
        }
        if let Some(w) = points.windows(2).position(|w| w[1] <= w[0]) {
            return domain(format!(
                "time grid is not strictly increasing at index {}: {} then {}",
                w + 1,
                points[w],
                points[w + 1]
            ));
        }
        Ok(Self { points })
    }

    /// `intervals + 1` equally spaced points on `[0, horizon]`.
    pub fn uniform(horizon: f64, intervals: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        if intervals == 0 {
            return domain("a uniform grid needs at least one interval");
        }
        let mut points: Vec<f64> = (0..=intervals)
            .map(|i| horizon * i as f64 / intervals as f64)
            .collect();
        points[intervals] = horizon;
        Self::new(points)
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest consecutive gap.
    pub fn mesh(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index of the largest grid point `<= t` (0 for `t < 0`).
    pub fn index_at(&self, t: f64) -> usize {
        self.partition(t, |p| p <= t).saturating_sub(1)
    }

    /// Index of the largest grid point `< t` (0 if there is none).
    fn index_before(&self, t: f64) -> usize {
        self.partition(t, |p| p < t).saturating_sub(1)
    }

    /// `points.partition_point(below)`, probing a short window around the
    /// position `t` would have on a uniform grid before bisecting.
    fn partition(&self, t: f64, below: impl Fn(f64) -> bool) -> usize {
        let p = &self.points;
        let n = p.len();
        let guess = t / self.horizon() * (n - 1) as f64;
        if guess.is_finite() {
            let g = guess.clamp(0.0, (n - 1) as f64) as usize;
            let (lo, hi) = (g.saturating_sub(1), (g + 2).min(n));
            if (lo == 0 || below(p[lo - 1])) && (hi == n || !below(p[hi])) {
                return lo + p[lo..hi].partition_point(|&x| below(x));
            }
        }
        p.partition_point(|&x| below(x))
    }
}

/// Right-continuous piecewise-constant path on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CadlagPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl CadlagPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return domain(format!(
                "path has {} values for {} grid points",
                values.len(),
                grid.len()
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values }
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points.iter().map(|&t| f(t)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn evaluate(&self, t: f64) -> Result<f64> {
        let horizon = self.horizon();
        if !(t >= 0.0) || t > horizon * (1.0 + HORIZON_RTOL) {
            return domain(format!("t = {t} outside [0, {horizon}]"));
        }
        Ok(self.values[self.grid.index_at(t)])
    }

    /// Same values with every entry mapped through `f`.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self
            .grid
            .points
            .iter()
            .zip(&self.values)
            .map(|(&t, &x)| f(t, x))
            .collect();
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Restriction to `[0, horizon]`, with `horizon` appended as a grid point.
    pub fn restrict(&self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || horizon > self.horizon() * (1.0 + HORIZON_RTOL) {
            return domain(format!(
                "cannot restrict a path on [0, {}] to [0, {horizon}]",
                self.horizon()
            ));
        }
        let keep = self.grid.points.partition_point(|&p| p < horizon);
        let mut points = self.grid.points[..keep].to_vec();
        let mut values = self.values[..keep].to_vec();
        points.push(horizon);
        values.push(self.values[self.grid.index_at(horizon)]);
        Self::new(TimeGrid::new(points)?, values)
    }

    /// Discretization along a subdivision `t_1 < ... < t_k` of `[0, T]`:
    /// the value `X(t_i)` is held on `[t_i, t_{i+1})`, and the terminal
    /// value is the one held from `t_{k-1}`, so in general `X^n_T != X_T`.
    pub fn discretize(&self, subdivision: &TimeGrid) -> Result<Self> {
        if !same_horizon(self.horizon(), subdivision.horizon()) {
            return domain(format!(
                "subdivision horizon {} differs from path horizon {}",
                subdivision.horizon(),
                self.horizon()
            ));
        }
        let k = subdivision.len();
        let mut values: Vec<f64> = subdivision.points[..k - 1]
            .iter()
            .map(|&t| self.values[self.grid.index_at(t)])
            .collect();
        values.push(values[k - 2]);
        Self::new(subdivision.clone(), values)
    }

    /// Two-column CSV with header `t,x`, one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x\n");
        for (t, x) in self.grid.points.iter().zip(&self.values) {
            writeln!(out, "{t},{x}").unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("t,x") => {}
            other => {
                return Err(StopLabError::Parse(format!(
                    "expected header `t,x`, found {other:?}"
                )))
            }
        }
        let mut points = Vec::new();
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse = |field: Option<&str>| -> Result<f64> {
                field
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| StopLabError::Parse(format!("bad row {}: {line:?}", row + 2)))
            };
            let mut fields = line.split(',');
            points.push(parse(fields.next())?);
            values.push(parse(fields.next())?);
        }
        Self::new(TimeGrid::new(points)?, values)
    }
}

fn check_horizons(x: &CadlagPath, y: &CadlagPath) -> Result<()> {
    if same_horizon(x.horizon(), y.horizon()) {
        Ok(())
    } else {
        domain(format!(
            "paths live on different horizons: {} and {}",
            x.horizon(),
            y.horizon()
        ))
    }
}

/// `sup_t |x(t) - y(t)|`, exact for step paths: the supremum is attained on
/// the merged grid.
pub fn sup_distance(x: &CadlagPath, y: &CadlagPath) -> Result<f64> {
    check_horizons(x, y)?;
    let (px, py) = (x.grid.points(), y.grid.points());
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    loop {
        sup = sup.max((x.values[i] - y.values[j]).abs());
        match (px.get(i + 1), py.get(j + 1)) {
            (None, None) => break,
            (Some(_), None) => i += 1,
            (None, Some(_)) => j += 1,
            (Some(a), Some(b)) => {
                if a < b {
                    i += 1;
                } else if b < a {
                    j += 1;
                } else {
                    i += 1;
                    j += 1;
                }
            }
        }
    }
    Ok(sup)
}

/// Range knots per domain knot in the time-change family.
const RANGE_SUBGRID: usize = 4;
/// Slopes of admissible time changes lie in `[1/4, 4]`.
const MAX_KNOT_INCREMENT: usize = 4 * RANGE_SUBGRID;

/// Upper approximation of the Skorokhod J1 distance.
///
/// Minimizes `max(sup |λ(t) - t|, sup |x(λ(t)) - y(t)|)` over increasing
/// piecewise-linear `λ` with knots at `iT/r` (`r = resolution`), knot values
/// on the grid `jT/(4r)` and slopes in `[1/4, 4]`, then symmetrizes by also
/// deforming `y` and taking the smaller value. The identity belongs to the
/// family, so the result never exceeds [`sup_distance`]. Families are nested
/// when `resolution` is multiplied by an integer, so the bound can only
/// tighten along such refinements.
pub fn skorokhod_j1_distance(x: &CadlagPath, y: &CadlagPath, resolution: usize) -> Result<f64> {
    check_horizons(x, y)?;
    if resolution == 0 {
        return domain("J1 resolution must be at least 1");
    }
    let uniform = sup_distance(x, y)?;
    if uniform == 0.0 {
        return Ok(0.0);
    }
    let fx = StepIndex::new(x);
    let fy = StepIndex::new(y);
    let forward = deformed_distance(&fx, &fy, x.horizon(), resolution, uniform);
    let backward = deformed_distance(&fy, &fx, x.horizon(), resolution, uniform.min(forward));
    Ok(uniform.min(forward).min(backward))
}

struct StepIndex<'a> {
    path: &'a CadlagPath,
    extrema: RangeExtrema,
}

impl<'a> StepIndex<'a> {
    fn new(path: &'a CadlagPath) -> Self {
        Self {
            path,
            extrema: RangeExtrema::new(&path.values),
        }
    }

    fn points(&self) -> &[f64] {
        self.path.grid.points()
    }
}

/// Best cost over the time-change family applied to `changed`, or a value
/// `>= bound` when nothing beats `bound`.
#[allow(clippy::needless_range_loop)]
fn deformed_distance(
    changed: &StepIndex,
    fixed: &StepIndex,
    horizon: f64,
    knots: usize,
    bound: f64,
) -> f64 {
    let endpoint = (changed.path.terminal() - fixed.path.terminal()).abs();
    if endpoint >= bound {
        return endpoint;
    }
    let range_knots = knots * RANGE_SUBGRID;
    let knot_time = |i: usize| horizon * i as f64 / knots as f64;
    let range_time = |j: usize| horizon * j as f64 / range_knots as f64;

    let mut best = vec![f64::INFINITY; range_knots + 1];
    best[0] = endpoint;
    for i in 0..knots {
        let (ta, tb) = (knot_time(i), knot_time(i + 1));
        let remaining = knots - i - 1;
        let mut next = vec![f64::INFINITY; range_knots + 1];
        for j in 0..=range_knots {
            if best[j] >= bound {
                continue;
            }
            for inc in 1..=MAX_KNOT_INCREMENT {
                let jn = j + inc;
                if jn > range_knots {
                    break;
                }
                let left = range_knots - jn;
                if left < remaining || left > remaining * MAX_KNOT_INCREMENT {
                    continue;
                }
                let (sa, sb) = (range_time(j), range_time(jn));
                let lower = best[j].max((sb - tb).abs());
                let cap = bound.min(next[jn]);
                if lower >= cap {
                    continue;
                }
                let cost = lower.max(segment_sup(changed, fixed, ta, tb, sa, sb, cap));
                if cost < next[jn] {
                    next[jn] = cost;
                }
            }
        }
        best = next;
    }
    best[range_knots]
}

/// `sup_{t in [a, b)} |f(λ(t)) - g(t)|` for the linear `λ` mapping `[a, b)`
/// onto `[c, e)`. Stops early once the running supremum reaches `cap`.
fn segment_sup(f: &StepIndex, g: &StepIndex, a: f64, b: f64, c: f64, e: f64, cap: f64) -> f64 {
    let slope = (e - c) / (b - a);
    let (fp, gp) = (f.points(), g.points());
    let (f_lo, f_hi) = (f.path.grid.index_at(c), f.path.grid.index_before(e));
    let (g_lo, g_hi) = (g.path.grid.index_at(a), g.path.grid.index_before(b));
    let mut sup: f64 = 0.0;
    if f_hi - f_lo <= g_hi - g_lo {
        for p in f_lo..=f_hi {
            let t_lo = if p == f_lo { a } else { a + (fp[p] - c) / slope };
            let t_hi = if p == f_hi { b } else { a + (fp[p + 1] - c) / slope };
            if t_hi <= t_lo {
                continue;
            }
            let lo = g.path.grid.index_at(t_lo).max(g_lo);
            let hi = g.path.grid.index_before(t_hi).min(g_hi);
            if lo > hi {
                continue;
            }
            let (mn, mx) = g.extrema.query(lo, hi);
            let v = f.path.values[p];
            sup = sup.max((v - mn).abs()).max((v - mx).abs());
            if sup >= cap {
                return sup;
            }
        }
    } else {
        for q in g_lo..=g_hi {
            let u_lo = if q == g_lo { c } else { c + (gp[q] - a) * slope };
            let u_hi = if q == g_hi { e } else { c + (gp[q + 1] - a) * slope };
            if u_hi <= u_lo {
                continue;
            }
            let lo = f.path.grid.index_at(u_lo).max(f_lo);
            let hi = f.path.grid.index_before(u_hi).min(f_hi);
            if lo > hi {
                continue;
            }
            let (mn, mx) = f.extrema.query(lo, hi);
            let v = g.path.values[q];
            sup = sup.max((v - mn).abs()).max((v - mx).abs());
            if sup >= cap {
                return sup;
            }
        }
    }
    sup
}
