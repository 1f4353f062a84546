//! Stochastic inputs: Brownian drivers, Black-Scholes prices, and the
//! coupling of ±√(T/n) random walks to a Brownian path through successive
//! band exits.
//!
//! Every sampler is a pure function of its parameters and seed. Coarse
//! Brownian increments come from a ChaCha8 generator; the bridge midpoint of
//! a dyadic node is drawn from a counter-based hash of (seed key, coarse
//! interval, node), so any point of the refined path has the same value no
//! matter which walk size asked for it.

use rand::{Rng, RngCore, SeedableRng};
use std::f64::consts::TAU;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, StopLabError};
use crate::paths::{CadlagPath, TimeGrid};

/// Black-Scholes market: `dS = S (a dt + sigma dB)` with `a = drift` under the
/// physical measure and `a = rate` under the risk-neutral one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlackScholesParams {
    pub s0: f64,
    pub rate: f64,
    pub sigma: f64,
    pub drift: f64,
    pub horizon: f64,
}

impl BlackScholesParams {
    pub fn new(s0: f64, rate: f64, sigma: f64, drift: f64, horizon: f64) -> Result<Self> {
        let params = Self {
            s0,
            rate,
            sigma,
            drift,
            horizon,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0) || !self.s0.is_finite() {
            return Err(StopLabError::Parameter(format!("S0 must be positive, got {}", self.s0)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(StopLabError::Parameter(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(StopLabError::Parameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !self.rate.is_finite() || !self.drift.is_finite() {
            return Err(StopLabError::Parameter("rate and drift must be finite".into()));
        }
        Ok(())
    }

    /// The physical drift whose log-price has no trend, `sigma^2 / 2`. A
    /// symmetric ±1 walk scaled by `sigma √(T/n)` converges to this model.
    pub fn with_symmetric_drift(mut self) -> Self {
        self.drift = 0.5 * self.sigma * self.sigma;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    Physical,
    RiskNeutral,
}

/// A seeded Brownian path sampled on a uniform grid, refinable on demand by
/// Brownian-bridge midpoints.
#[derive(Debug, Clone)]
pub struct BrownianDriver {
    path: CadlagPath,
    bridge_key: u64,
}

impl BrownianDriver {
    pub fn sample(horizon: f64, intervals: usize, seed: u64) -> Result<Self> {
        let grid = TimeGrid::uniform(horizon, intervals)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = grid.points();
        let mut values = Vec::with_capacity(points.len());
        let mut b = 0.0;
        values.push(b);
        for w in points.windows(2) {
            let z: f64 = rng.sample(StandardNormal);
            b += z * (w[1] - w[0]).sqrt();
            values.push(b);
        }
        let path = CadlagPath::new(grid, values)?;
        let bridge_key = rng.next_u64();
        Ok(Self { path, bridge_key })
    }

    pub fn path(&self) -> &CadlagPath {
        &self.path
    }

    /// Bridge midpoint of dyadic `node` (root = 1) inside coarse interval
    /// `interval`, given the endpoint values and the width of the node.
    fn midpoint(&self, interval: usize, node: u64, left: f64, right: f64, width: f64) -> f64 {
        let base = mix64(self.bridge_key ^ mix64(interval as u64));
        let a = mix64(base ^ node.wrapping_mul(GOLDEN_GAMMA));
        let b = mix64(a ^ GOLDEN_GAMMA);
        let z = (-2.0 * unit_open(a).ln()).sqrt() * (TAU * unit_open(b)).cos();
        0.5 * (left + right) + 0.5 * width.sqrt() * z
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on `(0, 1)` from the top 53 bits.
fn unit_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Brownian path with `B(0) = 0` on `points` equally spaced times of `[0, T]`.
pub fn sample_brownian(horizon: f64, points: usize, seed: u64) -> Result<CadlagPath> {
    if points < 2 {
        return domain(format!("a Brownian sample needs at least 2 points, got {points}"));
    }
    Ok(BrownianDriver::sample(horizon, points - 1, seed)?.path)
}

/// Exact strong solution `S0 exp((a - sigma^2/2) t + sigma B(t))` along `driver`.
pub fn sample_black_scholes(
    params: &BlackScholesParams,
    driver: &CadlagPath,
    measure: Measure,
) -> Result<CadlagPath> {
    params.validate()?;
    if driver.values()[0] != 0.0 {
        return domain("Brownian driver must start at 0");
    }
    let a = match measure {
        Measure::Physical => params.drift,
        Measure::RiskNeutral => params.rate,
    };
    let trend = a - 0.5 * params.sigma * params.sigma;
    Ok(driver.map(|t, b| params.s0 * (trend * t + params.sigma * b).exp()))
}

/// A ±√(T/n) walk built from the successive band exits of a Brownian path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingResult {
    /// The Brownian path on `[0, T]`.
    pub brownian: CadlagPath,
    /// `B^n_t = √(T/n) Σ_{i <= [nt/T]} Y_i` on the grid `{iT/n}`.
    pub walk: CadlagPath,
    pub signs: Vec<i8>,
    /// Exit times; they may run past `T`.
    pub hitting_times: Vec<f64>,
    pub steps: usize,
}

/// Walk `√(T/n) Σ signs` on the uniform grid with `n = signs.len()` steps.
pub fn walk_from_signs(signs: &[i8], horizon: f64) -> Result<CadlagPath> {
    check_signs(signs)?;
    let n = signs.len();
    let scale = (horizon / n as f64).sqrt();
    let grid = TimeGrid::uniform(horizon, n)?;
    let values = partial_sums(signs).map(|s| scale * s as f64).collect();
    CadlagPath::new(grid, values)
}

fn partial_sums(signs: &[i8]) -> impl Iterator<Item = i64> + '_ {
    std::iter::once(0).chain(signs.iter().scan(0i64, |acc, &s| {
        *acc += i64::from(s);
        Some(*acc)
    }))
}

pub(crate) fn check_signs(signs: &[i8]) -> Result<()> {
    if signs.is_empty() {
        return domain("sign sequence is empty");
    }
    if let Some(i) = signs.iter().position(|&s| s != 1 && s != -1) {
        return domain(format!("sign {} at index {i} is not ±1", signs[i]));
    }
    Ok(())
}

fn finish_coupling(
    brownian: &CadlagPath,
    horizon: f64,
    signs: Vec<i8>,
    hitting_times: Vec<f64>,
) -> Result<CouplingResult> {
    let steps = signs.len();
    Ok(CouplingResult {
        brownian: brownian.restrict(horizon)?,
        walk: walk_from_signs(&signs, horizon)?,
        signs,
        hitting_times,
        steps,
    })
}

fn check_embedding_args(brownian: &CadlagPath, horizon: f64, n: usize) -> Result<()> {
    if n == 0 {
        return domain("the walk needs at least one step");
    }
    if !(horizon > 0.0) || horizon > brownian.horizon() {
        return domain(format!(
            "walk horizon {horizon} must lie in (0, {}]",
            brownian.horizon()
        ));
    }
    Ok(())
}

/// Band-exit embedding read off the sample grid: the `i`-th exit is the first
/// grid point after the previous one where `|B - B(previous exit)|` reaches
/// `√(T/n)`, and its sign is the direction of that excursion.
///
/// `brownian` may extend past `horizon`; exits are searched over its whole
/// grid. Running out of path is an error, never a truncation.
pub fn knight_embedding(brownian: &CadlagPath, horizon: f64, n: usize) -> Result<CouplingResult> {
    check_embedding_args(brownian, horizon, n)?;
    let band = (horizon / n as f64).sqrt();
    let points = brownian.grid().points();
    let values = brownian.values();
    let mut signs = Vec::with_capacity(n);
    let mut hitting_times = Vec::with_capacity(n);
    let mut index = 0;
    while signs.len() < n {
        let center = values[index];
        let next = (index + 1..values.len()).find(|&i| (values[i] - center).abs() >= band);
        match next {
            Some(i) => {
                signs.push(if values[i] > center { 1 } else { -1 });
                hitting_times.push(points[i]);
                index = i;
            }
            None => {
                return Err(StopLabError::InsufficientExits {
                    found: signs.len(),
                    needed: n,
                    driver_horizon: brownian.horizon(),
                })
            }
        }
    }
    finish_coupling(brownian, horizon, signs, hitting_times)
}

/// Band-exit embedding on the bridge-refined driver. Exits are located on
/// dyadic sub-grids down to `refine_depth` halvings of a coarse step, which
/// keeps the exit-time bias small even when the band is only a couple of
/// coarse standard deviations wide.
pub fn knight_embedding_refined(
    driver: &BrownianDriver,
    horizon: f64,
    n: usize,
    refine_depth: u32,
) -> Result<CouplingResult> {
    check_embedding_args(driver.path(), horizon, n)?;
    if refine_depth > 40 {
        return domain("refine depth above 40 exceeds double precision");
    }
    let band = (horizon / n as f64).sqrt();
    let mut signs = Vec::with_capacity(n);
    let mut hitting_times = Vec::with_capacity(n);
    let mut start = 0.0;
    let mut center = 0.0;
    while signs.len() < n {
        let search = ExitSearch {
            driver,
            center,
            band,
            start,
            max_depth: refine_depth,
        };
        match search.first_exit() {
            Some((t, b)) => {
                signs.push(if b > center { 1 } else { -1 });
                hitting_times.push(t);
                start = t;
                center = b;
            }
            None => {
                return Err(StopLabError::InsufficientExits {
                    found: signs.len(),
                    needed: n,
                    driver_horizon: driver.path().horizon(),
                })
            }
        }
    }
    finish_coupling(driver.path(), horizon, signs, hitting_times)
}

/// `2 m0 m1 / h` above this makes a bridge crossing less likely than 1e-8.
const NEGLIGIBLE_CROSSING_EXPONENT: f64 = 18.5;

struct ExitSearch<'a> {
    driver: &'a BrownianDriver,
    center: f64,
    band: f64,
    start: f64,
    max_depth: u32,
}

impl ExitSearch<'_> {
    fn first_exit(&self) -> Option<(f64, f64)> {
        let path = self.driver.path();
        let points = path.grid().points();
        let values = path.values();
        let first = path.grid().index_at(self.start).min(points.len() - 2);
        (first..points.len() - 1).find_map(|k| {
            self.search(k, 1, points[k], points[k + 1], values[k], values[k + 1], 0)
        })
    }

    fn outside(&self, b: f64) -> bool {
        (b - self.center).abs() >= self.band
    }

    fn crossing_negligible(&self, left: f64, right: f64, width: f64) -> bool {
        let upper = self.center + self.band;
        let lower = self.center - self.band;
        let up = 2.0 * (upper - left) * (upper - right) / width;
        let down = 2.0 * (left - lower) * (right - lower) / width;
        up > NEGLIGIBLE_CROSSING_EXPONENT && down > NEGLIGIBLE_CROSSING_EXPONENT
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        interval: usize,
        node: u64,
        l: f64,
        r: f64,
        bl: f64,
        br: f64,
        depth: u32,
    ) -> Option<(f64, f64)> {
        if r <= self.start {
            return None;
        }
        let exits_at_right = self.outside(br);
        if depth == self.max_depth {
            return exits_at_right.then_some((r, br));
        }
        if l >= self.start && !exits_at_right && self.crossing_negligible(bl, br, r - l) {
            return None;
        }
        let bm = self.driver.midpoint(interval, node, bl, br, r - l);
        let m = 0.5 * (l + r);
        self.search(interval, 2 * node, l, m, bl, bm, depth + 1)
            .or_else(|| self.search(interval, 2 * node + 1, m, r, bm, br, depth + 1))
    }
}

/// CRR price path `S0 u^{#up} d^{#down}` with `u = exp(sigma √(T/n))`,
/// `d = 1/u`, on the grid `{iT/n}`.
pub fn crr_path_from_signs(signs: &[i8], params: &BlackScholesParams, n: usize) -> Result<CadlagPath> {
    params.validate()?;
    if signs.len() != n {
        return domain(format!("expected {n} signs, got {}", signs.len()));
    }
    check_signs(signs)?;
    let log_up = params.sigma * (params.horizon / n as f64).sqrt();
    let grid = TimeGrid::uniform(params.horizon, n)?;
    let values = partial_sums(signs)
        .map(|s| params.s0 * (log_up * s as f64).exp())
        .collect();
    CadlagPath::new(grid, values)
}

/// Draws coupled `(B, B^n, S^n)` triples from seeded drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledSampler {
    pub params: BlackScholesParams,
    /// Coarse driver intervals per horizon `T`.
    pub driver_intervals: usize,
    /// The driver runs on `[0, extension * T]` so that `n` exits fit.
    pub extension: usize,
    pub refine_depth: u32,
}

pub const DEFAULT_DRIVER_INTERVALS: usize = 1 << 14;
pub const DEFAULT_EXTENSION: usize = 3;
pub const DEFAULT_REFINE_DEPTH: u32 = 20;

impl CoupledSampler {
    pub fn new(params: BlackScholesParams) -> Self {
        Self {
            params,
            driver_intervals: DEFAULT_DRIVER_INTERVALS,
            extension: DEFAULT_EXTENSION,
            refine_depth: DEFAULT_REFINE_DEPTH,
        }
    }

    pub fn driver(&self, seed: u64) -> Result<BrownianDriver> {
        if self.extension == 0 || self.driver_intervals == 0 {
            return domain("driver extension and resolution must be positive");
        }
        BrownianDriver::sample(
            self.params.horizon * self.extension as f64,
            self.driver_intervals * self.extension,
            seed,
        )
    }

    pub fn couple(&self, driver: &BrownianDriver, n: usize) -> Result<CouplingResult> {
        knight_embedding_refined(driver, self.params.horizon, n, self.refine_depth)
    }
}

/// Seed of the `index`-th path of a sweep started from `seed` (SplitMix64
/// finalizer, so neighbouring sweeps do not share paths).
pub fn path_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))
}

/// Multi-column CSV `t,B,Bn,Sn` on the merged grid of the Brownian path and
/// the walk.
pub fn coupled_triple_csv(coupling: &CouplingResult, crr: &CadlagPath) -> Result<String> {
    use std::fmt::Write as _;
    let mut times: Vec<f64> = coupling
        .brownian
        .grid()
        .points()
        .iter()
        .chain(coupling.walk.grid().points())
        .copied()
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut out = String::from("t,B,Bn,Sn\n");
    for t in times {
        writeln!(
            out,
            "{t},{},{},{}",
            coupling.brownian.evaluate(t)?,
            coupling.walk.evaluate(t)?,
            crr.evaluate(t)?
        )
        .unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::sup_distance;

    fn params() -> BlackScholesParams {
        BlackScholesParams::new(100.0, 0.05, 0.2, 0.1, 1.0).unwrap()
    }

    #[test]
    fn brownian_is_deterministic_and_starts_at_zero() {
        let a = sample_brownian(1.0, 257, 7).unwrap();
        let b = sample_brownian(1.0, 257, 7).unwrap();
        let c = sample_brownian(1.0, 257, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.values()[0], 0.0);
        assert_eq!(a.grid().len(), 257);
        assert!(sample_brownian(1.0, 1, 0).is_err());
    }

    #[test]
    fn black_scholes_degenerate_cases() {
        let driver = sample_brownian(1.0, 65, 3).unwrap();
        let p = params();
        let s = sample_black_scholes(&p, &driver, Measure::Physical).unwrap();
        assert_eq!(s.values()[0], p.s0);
        assert!(s.values().iter().all(|&v| v > 0.0));
        let flat = CadlagPath::constant(driver.grid().clone(), 0.0);
        let q = BlackScholesParams { rate: 0.0, sigma: 0.3, ..p };
        let s = sample_black_scholes(&q, &flat, Measure::RiskNeutral).unwrap();
        // exp of (-sigma^2/2) t: only the volatility correction remains
        let s_no_vol = sample_black_scholes(
            &BlackScholesParams { sigma: 1e-300, ..q },
            &flat,
            Measure::RiskNeutral,
        )
        .unwrap();
        assert!(s_no_vol.values().iter().all(|&v| v == q.s0));
        assert!(s.terminal() < q.s0);
    }

    #[test]
    fn params_validation() {
        assert!(BlackScholesParams::new(0.0, 0.0, 0.2, 0.0, 1.0).is_err());
        assert!(BlackScholesParams::new(1.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BlackScholesParams::new(1.0, 0.0, 0.2, 0.0, -1.0).is_err());
        assert!(BlackScholesParams::new(1.0, f64::NAN, 0.2, 0.0, 1.0).is_err());
    }

    #[test]
    fn monotone_driver_gives_all_up_steps() {
        let n = 8;
        let grid = TimeGrid::uniform(2.0, 4000).unwrap();
        // sawtooth-free ramp: rises by √(T/n) well before each walk step
        let path = CadlagPath::from_fn(grid, |t| 3.0 * t);
        let c = knight_embedding(&path, 1.0, n).unwrap();
        assert!(c.signs.iter().all(|&s| s == 1));
        let a = (1.0f64 / n as f64).sqrt();
        for (i, v) in c.walk.values().iter().enumerate() {
            assert!((v - a * i as f64).abs() < 1e-12);
        }
        assert!(c.hitting_times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_step_takes_the_sign_of_the_first_exit() {
        let grid = TimeGrid::uniform(3.0, 300).unwrap();
        let down = CadlagPath::from_fn(grid.clone(), |t| -t);
        let c = knight_embedding(&down, 1.0, 1).unwrap();
        assert_eq!(c.signs, vec![-1]);
        assert_eq!(c.hitting_times, vec![1.0]);
        assert_eq!(c.walk.values(), &[0.0, -1.0]);
        // touches +0.9 then falls through -1
        let wiggle = CadlagPath::from_fn(grid, |t| if t < 0.5 { 0.9 } else { -1.0 });
        assert_eq!(knight_embedding(&wiggle, 1.0, 1).unwrap().signs, vec![-1]);
    }

    #[test]
    fn too_short_driver_is_an_error_not_a_truncation() {
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let flat = CadlagPath::constant(grid, 0.0);
        match knight_embedding(&flat, 1.0, 4) {
            Err(StopLabError::InsufficientExits { found: 0, needed: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn refined_embedding_is_consistent_and_deterministic() {
        let sampler = CoupledSampler {
            driver_intervals: 1 << 10,
            ..CoupledSampler::new(params())
        };
        let driver = sampler.driver(11).unwrap();
        let a = sampler.couple(&driver, 64).unwrap();
        let b = sampler.couple(&sampler.driver(11).unwrap(), 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.signs.len(), 64);
        assert!(a.hitting_times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(walk_from_signs(&a.signs, 1.0).unwrap(), a.walk);
        assert!(sup_distance(&a.walk, &a.brownian).unwrap() < 2.0);
    }

    #[test]
    fn crr_path_closed_forms() {
        let p = BlackScholesParams::new(100.0, 0.0, 0.2, 0.0, 1.0).unwrap();
        let s = crr_path_from_signs(&[1, 1], &p, 2).unwrap();
        let u = (0.2 * 0.5f64.sqrt()).exp();
        assert!((s.terminal() - 100.0 * u * u).abs() < 1e-12 * 100.0);
        let alt = crr_path_from_signs(&[1, -1, 1, -1], &p, 4).unwrap();
        assert_eq!(alt.terminal(), 100.0);
        assert!(crr_path_from_signs(&[1, -1], &p, 3).is_err());
        assert!(crr_path_from_signs(&[1, 0], &p, 2).is_err());
    }

    #[test]
    fn triple_csv_has_merged_rows() {
        let grid = TimeGrid::uniform(2.0, 8).unwrap();
        let ramp = CadlagPath::from_fn(grid, |t| 2.0 * t);
        let c = knight_embedding(&ramp, 1.0, 2).unwrap();
        let s = crr_path_from_signs(&c.signs, &params(), 2).unwrap();
        let csv = coupled_triple_csv(&c, &s).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,B,Bn,Sn"));
        assert_eq!(lines.count(), 5);
    }
}
