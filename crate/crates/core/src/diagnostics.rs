//! Empirical estimators for tightness, convergence of filtrations and
//! convergence of stopping times.
//!
//! All estimators are deterministic for a fixed seed. Path sweeps run in
//! parallel but collect per-path results in path order and reduce them with
//! pairwise summation, so the result does not depend on the worker count.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{domain, Result};
use crate::numeric::{mean, median, pairwise_sum};
use crate::paths::{skorokhod_j1_distance, sup_distance, CadlagPath, TimeGrid};
use crate::processes::{
    crr_path_from_signs, path_seed, sample_black_scholes, CoupledSampler, Measure,
};
use crate::stopping::{Decision, RuleSpace, StoppingRule};
use crate::trees::{build_crr_model, optimal_rule, snell_envelope, BinomialModel, Payoff};

/// Uniformly weighted samples, kept sorted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return domain("an empirical distribution needs at least one sample");
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return domain("empirical samples must be finite");
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    /// Samples of a stopping time bounded by `horizon`.
    pub fn stopping_times(samples: Vec<f64>, horizon: f64) -> Result<Self> {
        if let Some(x) = samples.iter().find(|&&x| !(0.0..=horizon).contains(&x)) {
            return domain(format!("stopping time {x} outside [0, {horizon}]"));
        }
        Self::new(samples)
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.sorted)
    }

    /// Left-continuous inverse of the empirical CDF at `q` in (0, 1).
    pub fn quantile(&self, q: f64) -> f64 {
        let i = ((q * self.sorted.len() as f64) as usize).min(self.sorted.len() - 1);
        self.sorted[i]
    }
}

/// Size of the common quantile grid used by [`wasserstein1`].
pub const QUANTILE_GRID: usize = 1000;

/// W1 between two empirical laws, computed as the mean absolute difference
/// of their quantile functions on the midpoints `(i + 1/2) / 1000`.
pub fn wasserstein1(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let gaps: Vec<f64> = (0..QUANTILE_GRID)
        .map(|i| {
            let q = (i as f64 + 0.5) / QUANTILE_GRID as f64;
            (a.quantile(q) - b.quantile(q)).abs()
        })
        .collect();
    pairwise_sum(&gaps) / QUANTILE_GRID as f64
}

/// Fraction of pairs with `|a - b| > epsilon`.
pub fn convergence_in_probability_estimate(pairs: &[(f64, f64)], epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return domain(format!("epsilon must be positive, got {epsilon}"));
    }
    if pairs.is_empty() {
        return domain("no pairs to compare");
    }
    let far = pairs.iter().filter(|(a, b)| (a - b).abs() > epsilon).count();
    Ok(far as f64 / pairs.len() as f64)
}

/// A recombining walk `S_k = S0 u^j d^(k-j)` with up-probability `p_up`.
/// Unlike [`BinomialModel`] it allows `u = d`, the constant process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeWalk {
    pub steps: usize,
    pub horizon: f64,
    pub s0: f64,
    pub up: f64,
    pub down: f64,
    pub p_up: f64,
}

impl LatticeWalk {
    /// The model's price process under `p*`.
    pub fn risk_neutral(model: &BinomialModel) -> Self {
        Self {
            steps: model.steps(),
            horizon: model.horizon(),
            s0: model.s0(),
            up: model.up(),
            down: model.down(),
            p_up: model.p_star(),
        }
    }

    fn price(&self, k: usize, j: usize) -> f64 {
        self.s0 * self.up.powi(j as i32) * self.down.powi((k - j) as i32)
    }
}

/// Threshold rules of the Aldous probe: first entrance of the price above
/// `S0 u^m` or below `S0 d^m`, for `m` in `{⌈√n/4⌉, ⌈√n/2⌉, ⌈√n⌉}`, plus
/// the rule that stops at once.
pub fn threshold_rules(model: &BinomialModel) -> Result<Vec<StoppingRule>> {
    let n = model.steps();
    let root = (n as f64).sqrt();
    let mut offsets: Vec<i32> = [root / 4.0, root / 2.0, root]
        .iter()
        .map(|x| x.ceil().max(1.0) as i32)
        .collect();
    offsets.dedup();
    let mut rules = vec![StoppingRule::stop_at_root(model, RuleSpace::Markov)?];
    for m in offsets {
        let upper = model.s0() * model.up().powi(m) * (1.0 - 1e-12);
        let lower = model.s0() * model.down().powi(m) * (1.0 + 1e-12);
        for above in [true, false] {
            rules.push(StoppingRule::from_fn(n, model.horizon(), RuleSpace::Markov, |node| {
                let price = model.price(node.step(), node.ups());
                let hit = if above { price >= upper } else { price <= lower };
                if hit {
                    Decision::Stop
                } else {
                    Decision::Continue
                }
            })?);
        }
    }
    Ok(rules)
}

/// The documented probe family: the minimal optimal rule of each payoff
/// followed by [`threshold_rules`].
pub fn aldous_probe_family(model: &BinomialModel, payoffs: &[Payoff]) -> Result<Vec<StoppingRule>> {
    if payoffs.is_empty() {
        return domain("configuration error: the Aldous probe needs at least one payoff");
    }
    let mut rules = payoffs
        .iter()
        .map(|p| Ok(optimal_rule(&snell_envelope(model, p)?)))
        .collect::<Result<Vec<_>>>()?;
    rules.extend(threshold_rules(model)?);
    Ok(rules)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AldousEstimate {
    /// Largest probed `P[|X_σ - X_ν| >= ε]`; a lower bound of the supremum.
    pub estimate: f64,
    /// Index of the maximizing probe rule `σ`.
    pub probe: usize,
    /// Steps from `σ` to the maximizing `ν`.
    pub offset: usize,
}

/// Lower bound of `sup P[|X_σ - X_ν| >= ε]` over `σ <= ν <= σ + δ`, for
/// `σ` in the probe family of `payoffs` and `ν = σ + j` steps with
/// `jT/n <= δ`, by Monte Carlo under `p*`.
pub fn aldous_criterion_estimate(
    model: &BinomialModel,
    payoffs: &[Payoff],
    delta: f64,
    epsilon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<f64> {
    let rules = aldous_probe_family(model, payoffs)?;
    let walk = LatticeWalk::risk_neutral(model);
    Ok(aldous_estimate_with_rules(&walk, &rules, delta, epsilon, n_paths, seed)?.estimate)
}

/// Same estimator for an explicit probe family on any lattice walk.
///
/// Grows with `delta` and shrinks with `epsilon` for a fixed seed: the set
/// of probed pairs only grows with `delta`, and each indicator is monotone
/// in `epsilon`.
pub fn aldous_estimate_with_rules(
    walk: &LatticeWalk,
    rules: &[StoppingRule],
    delta: f64,
    epsilon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<AldousEstimate> {
    if rules.is_empty() {
        return domain("configuration error: empty probe family");
    }
    if !(delta >= 0.0) {
        return domain(format!("delta must be non-negative, got {delta}"));
    }
    if !(epsilon > 0.0) {
        return domain(format!("epsilon must be positive, got {epsilon}"));
    }
    if n_paths == 0 {
        return domain("need at least one path");
    }
    if let Some(r) = rules.iter().find(|r| r.steps() != walk.steps) {
        return domain(format!(
            "probe rule has {} steps, walk has {}",
            r.steps(),
            walk.steps
        ));
    }
    let n = walk.steps;
    let max_offset = ((delta * n as f64 / walk.horizon) * (1.0 + 1e-12)).floor() as usize;
    let max_offset = max_offset.min(n);
    let counts: Vec<Vec<u32>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(path_seed(seed, i));
            let signs: Vec<i8> = (0..n)
                .map(|_| if rng.random::<f64>() < walk.p_up { 1 } else { -1 })
                .collect();
            let mut ups = vec![0usize; n + 1];
            for k in 0..n {
                ups[k + 1] = ups[k] + usize::from(signs[k] == 1);
            }
            let price = |k: usize| walk.price(k, ups[k]);
            rules
                .iter()
                .flat_map(|rule| {
                    let sigma = rule.stop_index(&signs).expect("rule matches walk");
                    let base = price(sigma);
                    let mut hits = vec![0u32; max_offset + 1];
                    for (j, hit) in hits.iter_mut().enumerate() {
                        let nu = (sigma + j).min(n);
                        *hit = u32::from((price(nu) - base).abs() >= epsilon);
                    }
                    hits
                })
                .collect()
        })
        .collect();
    let width = max_offset + 1;
    let mut best = AldousEstimate {
        estimate: 0.0,
        probe: 0,
        offset: 0,
    };
    for probe in 0..rules.len() {
        for offset in 0..width {
            let total: u64 = counts
                .iter()
                .map(|c| u64::from(c[probe * width + offset]))
                .sum();
            let p = total as f64 / n_paths as f64;
            if p > best.estimate {
                best = AldousEstimate {
                    estimate: p,
                    probe,
                    offset,
                };
            }
        }
    }
    Ok(best)
}

/// An event determined by the terminal value of the walk / Brownian path,
/// with the closed-form conditional probability of its Brownian version.
pub trait TerminalEvent: Sync {
    /// Indicator for a walk ending after `ups` up-moves out of `steps`.
    fn tree_indicator(&self, ups: usize, steps: usize) -> f64;
    /// `P[A | F_t]` for the Brownian event, `t < T`, given `B(t) = b`.
    fn limit_martingale(&self, t: f64, b: f64, horizon: f64) -> f64;
    /// Indicator of the Brownian event given `B(T)`.
    fn limit_indicator(&self, terminal: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeEvent {
    /// The whole space.
    Sure,
    /// The empty event.
    Impossible,
    /// `{B(T) > 0}`, the default.
    PositiveTerminal,
}

impl TerminalEvent for ProbeEvent {
    fn tree_indicator(&self, ups: usize, steps: usize) -> f64 {
        match self {
            ProbeEvent::Sure => 1.0,
            ProbeEvent::Impossible => 0.0,
            ProbeEvent::PositiveTerminal => f64::from(u8::from(2 * ups > steps)),
        }
    }

    fn limit_martingale(&self, t: f64, b: f64, horizon: f64) -> f64 {
        match self {
            ProbeEvent::Sure => 1.0,
            ProbeEvent::Impossible => 0.0,
            ProbeEvent::PositiveTerminal => 0.5 * erfc(-b / (2.0 * (horizon - t)).sqrt()),
        }
    }

    fn limit_indicator(&self, terminal: f64) -> f64 {
        match self {
            ProbeEvent::Sure => 1.0,
            ProbeEvent::Impossible => 0.0,
            ProbeEvent::PositiveTerminal => f64::from(u8::from(terminal > 0.0)),
        }
    }
}

/// `P[A | first k moves]` for the symmetric walk, by backward induction.
/// Row `k` holds the values for `0..=k` up-moves.
pub fn tree_martingale(event: &dyn TerminalEvent, steps: usize) -> Result<Vec<Vec<f64>>> {
    let mut last: Vec<f64> = (0..=steps).map(|j| event.tree_indicator(j, steps)).collect();
    if let Some(j) = last.iter().position(|&v| v != 0.0 && v != 1.0) {
        return domain(format!(
            "event functional must be 0/1-valued, got {} for {j} up-moves",
            last[j]
        ));
    }
    let mut rows = vec![Vec::new(); steps + 1];
    for k in (0..steps).rev() {
        let row: Vec<f64> = (0..=k).map(|j| 0.5 * (last[j] + last[j + 1])).collect();
        rows[k + 1] = std::mem::replace(&mut last, row);
    }
    rows[0] = last;
    Ok(rows)
}

/// Default J1 resolution of the filtration probe.
pub const DEFAULT_PROBE_RESOLUTION: usize = 32;

/// Mean J1 distance between the walk martingale `P[A | F^n_t]` and the
/// Brownian martingale `P[A | F_t]` along coupled paths.
pub fn filtration_convergence_probe(
    sampler: &CoupledSampler,
    n: usize,
    event: &dyn TerminalEvent,
    n_paths: usize,
    seed: u64,
    resolution: usize,
) -> Result<f64> {
    if !n.is_power_of_two() {
        return domain(format!("walk size must be a power of two, got {n}"));
    }
    if n_paths == 0 {
        return domain("need at least one path");
    }
    let table = tree_martingale(event, n)?;
    let horizon = sampler.params.horizon;
    let grid = TimeGrid::uniform(horizon, n)?;
    let distances = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let driver = sampler.driver(path_seed(seed, i))?;
            let coupling = sampler.couple(&driver, n)?;
            let mut ups = 0usize;
            let mut values = Vec::with_capacity(n + 1);
            values.push(table[0][0]);
            for (k, &s) in coupling.signs.iter().enumerate() {
                ups += usize::from(s == 1);
                values.push(table[k + 1][ups]);
            }
            let tree = CadlagPath::new(grid.clone(), values)?;
            let limit = coupling.brownian.map(|t, b| {
                if t < horizon {
                    event.limit_martingale(t, b, horizon)
                } else {
                    event.limit_indicator(b)
                }
            });
            skorokhod_j1_distance(&tree, &limit, resolution)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&distances))
}

/// Uniform distances of one coupled draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingError {
    /// `sup |B^n - B|`.
    pub walk: f64,
    /// `sup |S^n - S|` against the Black-Scholes path with drift `sigma²/2`.
    pub price: f64,
}

/// Coupling errors for each `n` in `n_list` (outer index) and each seed.
pub fn coupling_errors(
    sampler: &CoupledSampler,
    n_list: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<CouplingError>>> {
    let params = sampler.params.with_symmetric_drift();
    let per_path = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let driver = sampler.driver(path_seed(seed, i))?;
            let mut reference: Option<CadlagPath> = None;
            n_list
                .iter()
                .map(|&n| {
                    let c = sampler.couple(&driver, n)?;
                    let s = match &reference {
                        Some(s) => s.clone(),
                        None => {
                            let s = sample_black_scholes(&params, &c.brownian, Measure::Physical)?;
                            reference = Some(s.clone());
                            s
                        }
                    };
                    let crr = crr_path_from_signs(&c.signs, &params, n)?;
                    Ok(CouplingError {
                        walk: sup_distance(&c.walk, &c.brownian)?,
                        price: sup_distance(&crr, &s)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n_list.len())
        .map(|k| per_path.iter().map(|row| row[k]).collect())
        .collect())
}

/// Medians of [`coupling_errors`] per `n`: `(walk, price)`.
pub fn median_coupling_errors(errors: &[Vec<CouplingError>]) -> Vec<(f64, f64)> {
    errors
        .iter()
        .map(|row| {
            let walk: Vec<f64> = row.iter().map(|e| e.walk).collect();
            let price: Vec<f64> = row.iter().map(|e| e.price).collect();
            (median(&walk), median(&price))
        })
        .collect()
}

/// Minimal optimal stopping times of `payoff` on the CRR trees of `n_list`,
/// evaluated along shared Brownian drivers. Outer index follows `n_list`,
/// inner index the path.
pub fn coupled_stopping_times(
    sampler: &CoupledSampler,
    payoff: &Payoff,
    n_list: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let rules = n_list
        .iter()
        .map(|&n| {
            let model = build_crr_model(&sampler.params, n)?;
            Ok(optimal_rule(&snell_envelope(&model, payoff)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_path = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let driver = sampler.driver(path_seed(seed, i))?;
            n_list
                .iter()
                .zip(&rules)
                .map(|(&n, rule)| rule.stopping_time(&sampler.couple(&driver, n)?.signs))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n_list.len())
        .map(|k| per_path.iter().map(|row| row[k]).collect())
        .collect())
}

/// CSV `n,delta,epsilon,estimate`.
pub fn aldous_csv(rows: &[(usize, f64, f64, f64)]) -> String {
    let mut out = String::from("n,delta,epsilon,estimate\n");
    for (n, delta, epsilon, estimate) in rows {
        writeln!(out, "{n},{delta},{epsilon},{estimate}").unwrap();
    }
    out
}

/// CSV `n,mean_j1,paths`.
pub fn filtration_csv(rows: &[(usize, f64, usize)]) -> String {
    let mut out = String::from("n,mean_j1,paths\n");
    for (n, d, paths) in rows {
        writeln!(out, "{n},{d},{paths}").unwrap();
    }
    out
}

/// CSV `n,w1,paths`.
pub fn stopping_law_csv(rows: &[(usize, f64, usize)]) -> String {
    let mut out = String::from("n,w1,paths\n");
    for (n, w, paths) in rows {
        writeln!(out, "{n},{w},{paths}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::BlackScholesParams;
    use crate::error::StopLabError;
    use crate::trees::Discounting;

    #[test]
    fn w1_examples() {
        let a = EmpiricalDistribution::new(vec![0.3, 0.1, 0.7]).unwrap();
        assert_eq!(wasserstein1(&a, &a), 0.0);
        let zero = EmpiricalDistribution::new(vec![0.0; 5]).unwrap();
        let c = EmpiricalDistribution::new(vec![2.5; 7]).unwrap();
        assert!((wasserstein1(&zero, &c) - 2.5).abs() < 1e-12);
        assert!((wasserstein1(&c, &zero) - 2.5).abs() < 1e-12);
        assert!(EmpiricalDistribution::new(vec![]).is_err());
        assert!(EmpiricalDistribution::stopping_times(vec![0.5, 1.2], 1.0).is_err());
    }

    #[test]
    fn w1_of_uniform_grids_is_the_shift() {
        let a = EmpiricalDistribution::new((0..1000).map(|i| i as f64 / 1000.0).collect()).unwrap();
        let b = EmpiricalDistribution::new((0..1000).map(|i| i as f64 / 1000.0 + 0.25).collect()).unwrap();
        assert!((wasserstein1(&a, &b) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn probability_fraction_examples() {
        let same = vec![(0.2, 0.2), (0.5, 0.5)];
        assert_eq!(convergence_in_probability_estimate(&same, 0.1).unwrap(), 0.0);
        let far = vec![(0.0, 0.2), (0.5, 0.3)];
        assert_eq!(convergence_in_probability_estimate(&far, 0.1).unwrap(), 1.0);
        assert!(convergence_in_probability_estimate(&far, 0.0).is_err());
        assert!(convergence_in_probability_estimate(&[], 0.1).is_err());
    }

    #[test]
    fn constant_process_has_zero_aldous_estimate() {
        let walk = LatticeWalk {
            steps: 16,
            horizon: 1.0,
            s0: 100.0,
            up: 1.0,
            down: 1.0,
            p_up: 0.5,
        };
        let rules = vec![
            StoppingRule::from_fn(16, 1.0, RuleSpace::Markov, |_| Decision::Stop).unwrap(),
            StoppingRule::from_fn(16, 1.0, RuleSpace::Markov, |n| {
                if n.ups() > 3 {
                    Decision::Stop
                } else {
                    Decision::Continue
                }
            })
            .unwrap(),
        ];
        let est = aldous_estimate_with_rules(&walk, &rules, 0.5, 1e-9, 200, 3).unwrap();
        assert_eq!(est.estimate, 0.0);
    }

    #[test]
    fn aldous_zero_delta_and_configuration_errors() {
        let params = BlackScholesParams::new(100.0, 0.05, 0.2, 0.0, 1.0).unwrap();
        let model = build_crr_model(&params, 64).unwrap();
        let put = Payoff::put(100.0, Discounting::PerStep).unwrap();
        let est = aldous_criterion_estimate(&model, std::slice::from_ref(&put), 0.0, 0.5, 300, 1).unwrap();
        assert_eq!(est, 0.0);
        assert!(aldous_criterion_estimate(&model, &[], 0.1, 0.5, 300, 1).is_err());
        assert!(aldous_criterion_estimate(&model, std::slice::from_ref(&put), 0.1, 0.0, 300, 1).is_err());
        assert!(aldous_criterion_estimate(&model, &[put], -0.1, 1.0, 300, 1).is_err());
    }

    #[test]
    fn tree_martingale_rows() {
        let rows = tree_martingale(&ProbeEvent::PositiveTerminal, 2).unwrap();
        assert_eq!(rows[2], vec![0.0, 0.0, 1.0]);
        assert_eq!(rows[1], vec![0.0, 0.5]);
        assert_eq!(rows[0], vec![0.25]);
        let sure = tree_martingale(&ProbeEvent::Sure, 5).unwrap();
        assert!(sure.iter().flatten().all(|&v| v == 1.0));
    }

    struct Fuzzy;

    impl TerminalEvent for Fuzzy {
        fn tree_indicator(&self, ups: usize, _: usize) -> f64 {
            ups as f64 * 0.3
        }
        fn limit_martingale(&self, _: f64, _: f64, _: f64) -> f64 {
            0.5
        }
        fn limit_indicator(&self, _: f64) -> f64 {
            0.5
        }
    }

    #[test]
    fn non_binary_event_is_a_domain_error() {
        assert!(matches!(tree_martingale(&Fuzzy, 4), Err(StopLabError::Domain(_))));
    }

    #[test]
    fn trivial_events_give_zero_probe_distance() {
        let params = BlackScholesParams::new(100.0, 0.05, 0.2, 0.0, 1.0).unwrap();
        let sampler = CoupledSampler {
            driver_intervals: 1 << 8,
            ..CoupledSampler::new(params)
        };
        for event in [ProbeEvent::Sure, ProbeEvent::Impossible] {
            let d = filtration_convergence_probe(&sampler, 8, &event, 5, 2, 8).unwrap();
            assert_eq!(d, 0.0);
        }
        assert!(filtration_convergence_probe(&sampler, 6, &ProbeEvent::Sure, 5, 2, 8).is_err());
    }
}
