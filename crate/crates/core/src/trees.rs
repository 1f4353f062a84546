//! Binomial models and Snell envelopes.
//!
//! Values are kept in time-0 units: the payoff's discounting is folded into
//! the gain at each node, and the envelope is
//!
//! ```text
//! U(n, j) = G(n, j)
//! U(k, j) = max(G(k, j), p* U(k+1, j+1) + (1 - p*) U(k+1, j))
//! ```
//!
//! where `G(k, j) = discount(k) · γ(kT/n, S0 u^j d^(k-j))`. The root of `U` is
//! the value in optimal stopping of the tree.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{domain, Result, StopLabError};
use crate::processes::BlackScholesParams;
use crate::stopping::{Decision, NodeId, RuleSpace, StoppingRule};

/// Recombining `n`-step tree with up/down factors and per-step accrual
/// `ρ`, priced under `p* = (ρ - d) / (u - d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinomialModel {
    steps: usize,
    horizon: f64,
    s0: f64,
    up: f64,
    down: f64,
    step_rate: f64,
    p_star: f64,
}

impl BinomialModel {
    pub fn new(
        steps: usize,
        horizon: f64,
        s0: f64,
        up: f64,
        down: f64,
        step_rate: f64,
    ) -> Result<Self> {
        if steps == 0 {
            return domain("a binomial model needs at least one step");
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        if !(s0 > 0.0) || !s0.is_finite() {
            return Err(StopLabError::Parameter(format!("S0 must be positive, got {s0}")));
        }
        if !(down > 0.0) || !(up > down) || !up.is_finite() {
            return Err(StopLabError::Parameter(format!(
                "need 0 < d < u, got d = {down}, u = {up}"
            )));
        }
        if !(down < step_rate && step_rate < up) {
            return Err(StopLabError::Parameter(format!(
                "no-arbitrage violated: need d < rho < u, got d = {down}, rho = {step_rate}, u = {up}"
            )));
        }
        let p_star = (step_rate - down) / (up - down);
        Ok(Self {
            steps,
            horizon,
            s0,
            up,
            down,
            step_rate,
            p_star,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn up(&self) -> f64 {
        self.up
    }

    pub fn down(&self) -> f64 {
        self.down
    }

    pub fn step_rate(&self) -> f64 {
        self.step_rate
    }

    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }

    /// `S0 u^j d^(k-j)`.
    pub fn price(&self, k: usize, j: usize) -> f64 {
        self.s0 * self.up.powi(j as i32) * self.down.powi((k - j) as i32)
    }

    pub fn node_count(&self) -> usize {
        (self.steps + 1) * (self.steps + 2) / 2
    }
}

fn node_index(k: usize, j: usize) -> usize {
    k * (k + 1) / 2 + j
}

/// Cox-Ross-Rubinstein tree: `u = exp(sigma √(T/n))`, `d = 1/u`,
/// `ρ = 1 + rT/n`.
pub fn build_crr_model(params: &BlackScholesParams, n: usize) -> Result<BinomialModel> {
    params.validate()?;
    if n == 0 {
        return domain("a binomial model needs at least one step");
    }
    let dt = params.horizon / n as f64;
    let up = (params.sigma * dt.sqrt()).exp();
    BinomialModel::new(n, params.horizon, params.s0, up, 1.0 / up, 1.0 + params.rate * dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Discounting {
    /// Gains are used as given.
    None,
    /// Gain at step `k` is multiplied by `ρ^-k`.
    PerStep,
    /// Gain at time `t` is multiplied by `e^(-rate t)`.
    Continuous { rate: f64 },
}

type GainFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Bounded gain `γ(t, x)` with its discounting convention.
#[derive(Clone)]
pub struct Payoff {
    label: String,
    bound: f64,
    discounting: Discounting,
    gain: Arc<GainFn>,
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff")
            .field("label", &self.label)
            .field("bound", &self.bound)
            .field("discounting", &self.discounting)
            .finish_non_exhaustive()
    }
}

impl Payoff {
    /// `bound` must dominate `|gain|`; it is checked at every node the
    /// payoff is evaluated on.
    pub fn new(
        label: impl Into<String>,
        bound: f64,
        discounting: Discounting,
        gain: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(bound >= 0.0) || !bound.is_finite() {
            return domain(format!("payoff bound must be finite and non-negative, got {bound}"));
        }
        Ok(Self {
            label: label.into(),
            bound,
            discounting,
            gain: Arc::new(gain),
        })
    }

    /// American put `(K - x)^+`, bounded by `K`.
    pub fn put(strike: f64, discounting: Discounting) -> Result<Self> {
        if !(strike >= 0.0) {
            return domain(format!("strike must be non-negative, got {strike}"));
        }
        Self::new(format!("put K={strike}"), strike, discounting, move |_, x| {
            (strike - x).max(0.0)
        })
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant {c}"), c.abs(), Discounting::None, move |_, _| c)
            .expect("finite constant")
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `γ + amplitude · bump`, where `|bump| <= 1`.
    pub fn perturbed(
        &self,
        amplitude: f64,
        bump: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let base = Arc::clone(&self.gain);
        Self::new(
            format!("{} + {amplitude}·bump", self.label),
            self.bound + amplitude.abs(),
            self.discounting,
            move |t, x| base(t, x) + amplitude * bump(t, x).clamp(-1.0, 1.0),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn discounting(&self) -> Discounting {
        self.discounting
    }

    pub fn gain(&self, t: f64, x: f64) -> f64 {
        (self.gain)(t, x)
    }

    pub fn discount_factor(&self, model: &BinomialModel, k: usize) -> f64 {
        match self.discounting {
            Discounting::None => 1.0,
            Discounting::PerStep => model.step_rate().powi(-(k as i32)),
            Discounting::Continuous { rate } => (-rate * model.time(k)).exp(),
        }
    }

    /// Discounted gain at node `(k, j)`.
    pub fn effective(&self, model: &BinomialModel, k: usize, j: usize) -> f64 {
        self.discount_factor(model, k) * self.gain(model.time(k), model.price(k, j))
    }

    fn checked_effective(&self, model: &BinomialModel, k: usize, j: usize) -> Result<f64> {
        let (t, x) = (model.time(k), model.price(k, j));
        let raw = self.gain(t, x);
        if !raw.is_finite() {
            return Err(StopLabError::Data(format!(
                "{}: non-finite gain {raw} at node ({k},{j}), t = {t}, x = {x}",
                self.label
            )));
        }
        if raw.abs() > self.bound * (1.0 + 1e-12) {
            return Err(StopLabError::Data(format!(
                "{}: |gain| = {} exceeds bound {} at node ({k},{j})",
                self.label,
                raw.abs(),
                self.bound
            )));
        }
        Ok(self.discount_factor(model, k) * raw)
    }
}

/// Stopping wins when the gain is within a few ulps of the continuation, so
/// exact ties computed along different rounding paths still stop.
const TIE_ULPS: f64 = 16.0;

fn stops(gain: f64, continuation: f64) -> bool {
    gain >= continuation - TIE_ULPS * f64::EPSILON * gain.abs().max(continuation.abs())
}

/// Full Snell envelope of a payoff on a model.
#[derive(Debug, Clone)]
pub struct SnellSolution {
    model: BinomialModel,
    payoff: Payoff,
    gain: Vec<f64>,
    continuation: Vec<f64>,
    envelope: Vec<f64>,
    immediate: Vec<bool>,
}

impl SnellSolution {
    pub fn model(&self) -> &BinomialModel {
        &self.model
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn root_value(&self) -> f64 {
        self.envelope[0]
    }

    pub fn envelope(&self, k: usize, j: usize) -> f64 {
        self.envelope[node_index(k, j)]
    }

    /// Discounted gain at the node.
    pub fn gain(&self, k: usize, j: usize) -> f64 {
        self.gain[node_index(k, j)]
    }

    /// `p* U(k+1, j+1) + (1 - p*) U(k+1, j)`; `None` at terminal nodes.
    pub fn continuation(&self, k: usize, j: usize) -> Option<f64> {
        (k < self.model.steps()).then(|| self.continuation[node_index(k, j)])
    }

    /// Whether the node belongs to the contact set `{U = G}`.
    pub fn immediate(&self, k: usize, j: usize) -> bool {
        self.immediate[node_index(k, j)]
    }

    /// CSV `k,j,price,gain,continuation,envelope,immediate`; the gain column
    /// is discounted and terminal nodes have an empty continuation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,j,price,gain,continuation,envelope,immediate\n");
        for k in 0..=self.model.steps() {
            for j in 0..=k {
                let cont = self
                    .continuation(k, j)
                    .map(|c| c.to_string())
                    .unwrap_or_default();
                writeln!(
                    out,
                    "{k},{j},{},{},{cont},{},{}",
                    self.model.price(k, j),
                    self.gain(k, j),
                    self.envelope(k, j),
                    u8::from(self.immediate(k, j))
                )
                .unwrap();
            }
        }
        out
    }
}

/// Backward induction over the whole tree, O(n²) time and memory.
pub fn snell_envelope(model: &BinomialModel, payoff: &Payoff) -> Result<SnellSolution> {
    let n = model.steps();
    let count = model.node_count();
    let mut gain = vec![0.0; count];
    let mut continuation = vec![f64::NAN; count];
    let mut envelope = vec![0.0; count];
    let mut immediate = vec![true; count];
    for j in 0..=n {
        let g = payoff.checked_effective(model, n, j)?;
        gain[node_index(n, j)] = g;
        envelope[node_index(n, j)] = g;
    }
    let p = model.p_star();
    for k in (0..n).rev() {
        for j in 0..=k {
            let i = node_index(k, j);
            let g = payoff.checked_effective(model, k, j)?;
            let up = envelope[node_index(k + 1, j + 1)];
            let down = envelope[node_index(k + 1, j)];
            let c = p * up + (1.0 - p) * down;
            gain[i] = g;
            continuation[i] = c;
            envelope[i] = g.max(c);
            immediate[i] = stops(g, c);
        }
    }
    Ok(SnellSolution {
        model: *model,
        payoff: payoff.clone(),
        gain,
        continuation,
        envelope,
        immediate,
    })
}

/// Root value only, with O(n) memory. Same arithmetic as [`snell_envelope`].
pub fn snell_value(model: &BinomialModel, payoff: &Payoff) -> Result<f64> {
    let n = model.steps();
    let mut values = (0..=n)
        .map(|j| payoff.checked_effective(model, n, j))
        .collect::<Result<Vec<_>>>()?;
    let p = model.p_star();
    for k in (0..n).rev() {
        for j in 0..=k {
            let g = payoff.checked_effective(model, k, j)?;
            let c = p * values[j + 1] + (1.0 - p) * values[j];
            values[j] = g.max(c);
        }
    }
    Ok(values[0])
}

/// Minimal optimal rule: stop at the first node of the contact set.
pub fn optimal_rule(solution: &SnellSolution) -> StoppingRule {
    let model = solution.model();
    StoppingRule::from_fn(model.steps(), model.horizon(), RuleSpace::Markov, |node| {
        let NodeId::Lattice { step, ups } = node else {
            unreachable!("markov rules are indexed by lattice nodes")
        };
        if solution.immediate(step, ups) {
            Decision::Stop
        } else {
            Decision::Continue
        }
    })
    .expect("model shape is valid")
}

/// `kT/n` for the first step `k` at which `rule` stops along `signs`.
pub fn stopping_time_on_path(rule: &StoppingRule, signs: &[i8]) -> Result<f64> {
    rule.stopping_time(signs)
}

/// Exercise boundary at one step: the largest lattice price at which the
/// rule stops with a strictly positive gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub step: usize,
    pub time: f64,
    pub critical_price: Option<f64>,
}

/// Per-step boundary of the contact set for payoffs that do not increase in
/// the price. Nodes where stopping only ties a worthless continuation (gain
/// 0) do not count as exercise.
pub fn exercise_boundary(solution: &SnellSolution) -> Result<Vec<BoundaryPoint>> {
    let model = solution.model();
    for k in 0..=model.steps() {
        for j in 0..k {
            let (t, lo, hi) = (model.time(k), model.price(k, j), model.price(k, j + 1));
            let (g_lo, g_hi) = (solution.payoff.gain(t, lo), solution.payoff.gain(t, hi));
            if g_hi > g_lo {
                return domain(format!(
                    "boundary undefined: gain increases with the price at step {k} ({g_lo} at {lo}, {g_hi} at {hi})"
                ));
            }
        }
    }
    Ok((0..=model.steps())
        .map(|k| BoundaryPoint {
            step: k,
            time: model.time(k),
            critical_price: (0..=k)
                .rev()
                .find(|&j| solution.immediate(k, j) && solution.gain(k, j) > 0.0)
                .map(|j| model.price(k, j)),
        })
        .collect())
}

/// CSV `k,t,critical_price`, empty price where there is no exercise.
pub fn boundary_csv(boundary: &[BoundaryPoint]) -> String {
    let mut out = String::from("k,t,critical_price\n");
    for b in boundary {
        let price = b.critical_price.map(|p| p.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{price}", b.step, b.time).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stopping::rule_value;

    fn hand_model() -> BinomialModel {
        BinomialModel::new(2, 1.0, 100.0, 1.1, 1.0 / 1.1, 1.0).unwrap()
    }

    #[test]
    fn crr_closed_form_and_identity() {
        let params = BlackScholesParams::new(100.0, 0.0, 0.2, 0.0, 1.0).unwrap();
        let m = build_crr_model(&params, 1).unwrap();
        assert_eq!(m.up(), 0.2f64.exp());
        assert_eq!(m.down(), 1.0 / 0.2f64.exp());
        assert_eq!(m.step_rate(), 1.0);
        assert_eq!(m.p_star(), (1.0 - m.down()) / (m.up() - m.down()));
        for (r, n) in [(0.05, 1), (0.05, 10), (0.0, 100), (-0.02, 7)] {
            let m = build_crr_model(&BlackScholesParams { rate: r, ..params }, n).unwrap();
            let lhs = m.p_star() * m.up() + (1.0 - m.p_star()) * m.down();
            assert!((lhs - m.step_rate()).abs() < 1e-12);
        }
    }

    #[test]
    fn smallest_arbitrage_free_n() {
        // e^-0.2 < 1.05 < e^0.2 already holds with one step
        let params = BlackScholesParams::new(100.0, 0.05, 0.2, 0.0, 1.0).unwrap();
        assert!(build_crr_model(&params, 1).is_ok());
        let tight = BlackScholesParams { sigma: 0.01, rate: 0.5, ..params };
        match build_crr_model(&tight, 1) {
            Err(StopLabError::Parameter(msg)) => assert!(msg.contains("no-arbitrage")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_and_constant_payoffs() {
        let m = hand_model();
        let zero = snell_envelope(&m, &Payoff::zero()).unwrap();
        assert_eq!(zero.root_value(), 0.0);
        for k in 0..=2 {
            for j in 0..=k {
                assert!(zero.immediate(k, j));
            }
        }
        let c = snell_envelope(&m, &Payoff::constant(3.0)).unwrap();
        assert_eq!(c.root_value(), 3.0);
        let rule = optimal_rule(&c);
        assert_eq!(rule.stop_index(&[1, -1]).unwrap(), 0);
    }

    #[test]
    fn hand_computed_two_step_put() {
        // p* = 10/21; terminal gains 0, 0, 100 - 100/1.21
        let m = hand_model();
        let put = Payoff::put(100.0, Discounting::None).unwrap();
        let s = snell_envelope(&m, &put).unwrap();
        let p = 10.0 / 21.0;
        assert!((m.p_star() - p).abs() < 1e-15);
        let low_terminal = 100.0 - 100.0 / 1.21;
        assert!((s.envelope(2, 0) - low_terminal).abs() < 1e-12);
        assert_eq!(s.envelope(2, 1), 0.0);
        assert_eq!(s.envelope(2, 2), 0.0);
        // at (1,0) the continuation equals the exercise value 100 - 100/1.1
        assert!((s.envelope(1, 0) - (100.0 - 100.0 / 1.1)).abs() < 1e-12);
        assert_eq!(s.envelope(1, 1), 0.0);
        assert!((s.root_value() - 100.0 / 21.0).abs() < 1e-12);
        let flags: Vec<bool> = [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)]
            .iter()
            .map(|&(k, j)| s.immediate(k, j))
            .collect();
        assert_eq!(flags, vec![false, true, true, true, true, true]);
        let rule = optimal_rule(&s);
        assert!((rule_value(&m, &put, &rule).unwrap() - s.root_value()).abs() < 1e-12);
        let boundary = exercise_boundary(&s).unwrap();
        assert_eq!(boundary[0].critical_price, None);
        assert_eq!(boundary[1].critical_price, Some(m.price(1, 0)));
        assert_eq!(boundary[2].critical_price, Some(m.price(2, 0)));
    }

    #[test]
    fn deep_out_of_the_money_put() {
        let m = hand_model();
        let put = Payoff::put(10.0, Discounting::None).unwrap();
        let s = snell_envelope(&m, &put).unwrap();
        assert_eq!(s.root_value(), 0.0);
        let boundary = exercise_boundary(&s).unwrap();
        assert!(boundary.iter().all(|b| b.critical_price.is_none()));
        // every node ties at zero, so the minimal optimal rule stops at once
        let rule = optimal_rule(&s);
        assert_eq!(rule.stop_index(&[-1, -1]).unwrap(), 0);
        assert_eq!(rule_value(&m, &put, &rule).unwrap(), 0.0);
    }

    #[test]
    fn strike_above_lattice_always_exercises() {
        let m = BinomialModel::new(6, 1.0, 100.0, 1.05, 1.0 / 1.05, 1.0).unwrap();
        let put = Payoff::put(1000.0, Discounting::None).unwrap();
        let s = snell_envelope(&m, &put).unwrap();
        for b in exercise_boundary(&s).unwrap() {
            assert_eq!(b.critical_price, Some(m.price(b.step, b.step)));
        }
        for k in 0..=6 {
            for j in 0..=k {
                assert!(s.immediate(k, j), "({k},{j})");
            }
        }
    }

    #[test]
    fn boundary_rejects_increasing_payoffs() {
        let m = hand_model();
        let call = Payoff::new("call", 1e3, Discounting::None, |_, x| (x - 100.0f64).max(0.0)).unwrap();
        let s = snell_envelope(&m, &call).unwrap();
        assert!(matches!(exercise_boundary(&s), Err(StopLabError::Domain(_))));
    }

    #[test]
    fn non_finite_and_unbounded_gains_are_data_errors() {
        let m = hand_model();
        let bad = Payoff::new("nan", 1.0, Discounting::None, |t, _| if t > 0.9 { f64::NAN } else { 0.0 }).unwrap();
        match snell_envelope(&m, &bad) {
            Err(StopLabError::Data(msg)) => assert!(msg.contains("node (2,0)"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        let loose = Payoff::new("loose", 1.0, Discounting::None, |_, x| x).unwrap();
        assert!(matches!(snell_value(&m, &loose), Err(StopLabError::Data(_))));
    }

    #[test]
    fn rolling_value_matches_full_envelope() {
        let params = BlackScholesParams::new(100.0, 0.05, 0.2, 0.0, 1.0).unwrap();
        let m = build_crr_model(&params, 200).unwrap();
        let put = Payoff::put(100.0, Discounting::PerStep).unwrap();
        assert_eq!(
            snell_value(&m, &put).unwrap(),
            snell_envelope(&m, &put).unwrap().root_value()
        );
    }

    #[test]
    fn csv_exports() {
        let s = snell_envelope(&hand_model(), &Payoff::put(100.0, Discounting::None).unwrap()).unwrap();
        let csv = s.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("k,j,price,gain,continuation,envelope,immediate"));
        assert!(lines.next().unwrap().starts_with("0,0,100,0,"));
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().last().unwrap().starts_with("2,2,"));
        let b = boundary_csv(&exercise_boundary(&s).unwrap());
        assert!(b.starts_with("k,t,critical_price\n0,0,\n1,0.5,"));
    }
}
