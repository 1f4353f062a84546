//! Stopping rules on binomial trees and the exhaustive oracles built on them.
//!
//! A [`StoppingRule`] assigns stop/continue to every node of either the
//! recombining lattice (Markov rules, node `(k, j)` with `j` up-moves) or the
//! full history tree (path-dependent rules, node = sign prefix). A decision
//! depends on its node only, so every rule is an adapted stopping time, and
//! terminal nodes always stop.

use std::fmt;
use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::error::{domain, Result, StopLabError};
use crate::processes::check_signs;
use crate::trees::{BinomialModel, Discounting, Payoff};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RuleSpace {
    Markov,
    PathDependent,
}

impl RuleSpace {
    pub fn name(self) -> &'static str {
        match self {
            RuleSpace::Markov => "markov",
            RuleSpace::PathDependent => "path_dependent",
        }
    }

    /// Largest tree depth the exhaustive enumeration accepts.
    pub fn enumeration_limit(self) -> usize {
        match self {
            RuleSpace::Markov => 6,
            RuleSpace::PathDependent => 4,
        }
    }

    /// Number of non-terminal nodes of an `n`-step tree.
    pub fn interior_nodes(self, steps: usize) -> usize {
        match self {
            RuleSpace::Markov => steps * (steps + 1) / 2,
            RuleSpace::PathDependent => (1usize << steps) - 1,
        }
    }

    fn node_count(self, steps: usize) -> usize {
        match self {
            RuleSpace::Markov => (steps + 1) * (steps + 2) / 2,
            RuleSpace::PathDependent => (1usize << (steps + 1)) - 1,
        }
    }
}

/// Largest history tree a path-dependent rule may store.
const MAX_HISTORY_STEPS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Stop,
    Continue,
}

/// A node of the lattice or of the history tree after `step` moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NodeId {
    Lattice { step: usize, ups: usize },
    /// `prefix` holds the moves so far, first move in the most significant
    /// bit, 1 = up.
    History { step: usize, prefix: u64 },
}

impl NodeId {
    pub fn step(self) -> usize {
        match self {
            NodeId::Lattice { step, .. } | NodeId::History { step, .. } => step,
        }
    }

    pub fn ups(self) -> usize {
        match self {
            NodeId::Lattice { ups, .. } => ups,
            NodeId::History { prefix, .. } => prefix.count_ones() as usize,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NodeId::Lattice { step, ups } => write!(f, "({step},{ups})"),
            NodeId::History { step, prefix } => {
                f.write_str("[")?;
                for i in (0..step).rev() {
                    f.write_str(if prefix >> i & 1 == 1 { "+" } else { "-" })?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingRule {
    steps: usize,
    horizon: f64,
    space: RuleSpace,
    decisions: Vec<Option<Decision>>,
}

impl StoppingRule {
    /// Rule from explicit decisions in node-index order (levels first, then
    /// `ups` or `prefix`). Missing terminal decisions default to stop; a
    /// terminal `Continue` is rejected.
    pub fn from_decisions(
        steps: usize,
        horizon: f64,
        space: RuleSpace,
        mut decisions: Vec<Option<Decision>>,
    ) -> Result<Self> {
        check_shape(steps, horizon, space)?;
        let count = space.node_count(steps);
        if decisions.len() != count {
            return Err(StopLabError::Structural(format!(
                "{} rule for n = {steps} needs {count} decisions, got {}",
                space.name(),
                decisions.len()
            )));
        }
        for slot in &mut decisions[space.interior_nodes(steps)..] {
            match slot {
                Some(Decision::Continue) => {
                    return Err(StopLabError::Structural(
                        "terminal nodes must stop: stopping times are bounded by T".into(),
                    ))
                }
                None => *slot = Some(Decision::Stop),
                Some(Decision::Stop) => {}
            }
        }
        Ok(Self {
            steps,
            horizon,
            space,
            decisions,
        })
    }

    /// Rule deciding every interior node with `decide`; terminal nodes stop.
    pub fn from_fn(
        steps: usize,
        horizon: f64,
        space: RuleSpace,
        mut decide: impl FnMut(NodeId) -> Decision,
    ) -> Result<Self> {
        check_shape(steps, horizon, space)?;
        let interior = space.interior_nodes(steps);
        let decisions = (0..space.node_count(steps))
            .map(|i| {
                if i < interior {
                    Some(decide(node_at(space, i)))
                } else {
                    Some(Decision::Stop)
                }
            })
            .collect();
        Ok(Self {
            steps,
            horizon,
            space,
            decisions,
        })
    }

    pub fn stop_at_root(model: &BinomialModel, space: RuleSpace) -> Result<Self> {
        Self::from_fn(model.steps(), model.horizon(), space, |_| Decision::Stop)
    }

    pub fn stop_at_horizon(model: &BinomialModel, space: RuleSpace) -> Result<Self> {
        Self::from_fn(model.steps(), model.horizon(), space, |_| Decision::Continue)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn space(&self) -> RuleSpace {
        self.space
    }

    pub fn decision(&self, node: NodeId) -> Option<Decision> {
        let index = match (self.space, node) {
            (RuleSpace::Markov, NodeId::Lattice { step, ups }) if ups <= step => {
                step * (step + 1) / 2 + ups
            }
            (RuleSpace::PathDependent, NodeId::History { step, prefix })
                if step <= MAX_HISTORY_STEPS && prefix < 1 << step =>
            {
                (1usize << step) - 1 + prefix as usize
            }
            _ => return None,
        };
        self.decisions.get(index).copied().flatten()
    }

    /// Step at which the rule stops along the move sequence `signs`. Only
    /// `signs[..k]` is read before stopping at step `k`.
    #[allow(clippy::needless_range_loop)]
    pub fn stop_index(&self, signs: &[i8]) -> Result<usize> {
        if signs.len() != self.steps {
            return domain(format!("expected {} signs, got {}", self.steps, signs.len()));
        }
        check_signs(signs)?;
        let mut ups = 0usize;
        let mut prefix = 0u64;
        for k in 0..=self.steps {
            let node = match self.space {
                RuleSpace::Markov => NodeId::Lattice { step: k, ups },
                RuleSpace::PathDependent => NodeId::History { step: k, prefix },
            };
            match self.decision(node) {
                Some(Decision::Stop) => return Ok(k),
                Some(Decision::Continue) => {}
                None => {
                    return Err(StopLabError::Structural(format!(
                        "no decision at reachable node {node}"
                    )))
                }
            }
            if k < self.steps {
                let up = signs[k] == 1;
                ups += usize::from(up);
                prefix = prefix << 1 | u64::from(up);
            }
        }
        unreachable!("terminal nodes always stop")
    }

    /// Stopping time `kT/n` along `signs`.
    pub fn stopping_time(&self, signs: &[i8]) -> Result<f64> {
        let k = self.stop_index(signs)?;
        Ok(self.horizon * k as f64 / self.steps as f64)
    }
}

fn check_shape(steps: usize, horizon: f64, space: RuleSpace) -> Result<()> {
    if steps == 0 {
        return domain("a stopping rule needs at least one step");
    }
    if !(horizon > 0.0) {
        return domain(format!("horizon must be positive, got {horizon}"));
    }
    if space == RuleSpace::PathDependent && steps > MAX_HISTORY_STEPS {
        return domain(format!(
            "path-dependent rules are stored for n <= {MAX_HISTORY_STEPS}, got {steps}"
        ));
    }
    Ok(())
}

fn node_at(space: RuleSpace, index: usize) -> NodeId {
    match space {
        RuleSpace::Markov => {
            let mut step = 0;
            while (step + 1) * (step + 2) / 2 <= index {
                step += 1;
            }
            NodeId::Lattice {
                step,
                ups: index - step * (step + 1) / 2,
            }
        }
        RuleSpace::PathDependent => {
            let step = (usize::BITS - 1 - (index + 1).leading_zeros()) as usize;
            NodeId::History {
                step,
                prefix: (index + 1 - (1 << step)) as u64,
            }
        }
    }
}

/// Probability of stopping at a node under the risk-neutral measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StopAtom {
    pub node: NodeId,
    pub probability: f64,
}

fn check_compatible(model: &BinomialModel, rule: &StoppingRule) -> Result<()> {
    if model.steps() != rule.steps() || model.horizon() != rule.horizon() {
        return domain(format!(
            "rule built for n = {}, T = {} applied to a model with n = {}, T = {}",
            rule.steps(),
            rule.horizon(),
            model.steps(),
            model.horizon()
        ));
    }
    Ok(())
}

/// Forward induction of the probability of reaching each node unstopped.
/// The atoms sum to one.
pub fn stopping_distribution(model: &BinomialModel, rule: &StoppingRule) -> Result<Vec<StopAtom>> {
    let mut atoms = Vec::new();
    let mut scratch = ForwardScratch::default();
    forward_pass(model, rule, &mut scratch, |node, probability| {
        atoms.push(StopAtom { node, probability })
    })?;
    Ok(atoms)
}

#[derive(Default)]
struct ForwardScratch {
    mass: Vec<f64>,
    next: Vec<f64>,
}

/// Calls `on_stop(node, probability)` for every node where the rule stops
/// with positive probability, level by level.
fn forward_pass(
    model: &BinomialModel,
    rule: &StoppingRule,
    scratch: &mut ForwardScratch,
    mut on_stop: impl FnMut(NodeId, f64),
) -> Result<()> {
    check_compatible(model, rule)?;
    let p = model.p_star();
    let ForwardScratch { mass, next } = scratch;
    mass.clear();
    mass.push(1.0);
    for k in 0..=model.steps() {
        let width = match rule.space() {
            RuleSpace::Markov => k + 2,
            RuleSpace::PathDependent => 1 << (k + 1),
        };
        next.clear();
        next.resize(width, 0.0);
        for (i, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let (node, up, down) = match rule.space() {
                RuleSpace::Markov => (NodeId::Lattice { step: k, ups: i }, i + 1, i),
                RuleSpace::PathDependent => (
                    NodeId::History {
                        step: k,
                        prefix: i as u64,
                    },
                    2 * i + 1,
                    2 * i,
                ),
            };
            match rule.decision(node) {
                Some(Decision::Stop) => on_stop(node, m),
                Some(Decision::Continue) => {
                    next[up] += m * p;
                    next[down] += m * (1.0 - p);
                }
                None => {
                    return Err(StopLabError::Structural(format!(
                        "no decision at reachable node {node}"
                    )))
                }
            }
        }
        std::mem::swap(mass, next);
    }
    Ok(())
}

/// Discounted gains of every lattice node, in node-index order.
fn lattice_gains(model: &BinomialModel, payoff: &Payoff) -> Result<Vec<f64>> {
    let mut gains = Vec::with_capacity(model.node_count());
    for k in 0..=model.steps() {
        for j in 0..=k {
            let g = payoff.effective(model, k, j);
            if !g.is_finite() {
                return Err(StopLabError::Data(format!(
                    "non-finite gain at node ({k},{j})"
                )));
            }
            gains.push(g);
        }
    }
    Ok(gains)
}

fn value_with_gains(
    model: &BinomialModel,
    gains: &[f64],
    rule: &StoppingRule,
    scratch: &mut ForwardScratch,
) -> Result<f64> {
    let mut value = 0.0;
    forward_pass(model, rule, scratch, |node, probability| {
        let (k, j) = (node.step(), node.ups());
        value += probability * gains[k * (k + 1) / 2 + j];
    })?;
    Ok(value)
}

/// `E*[G(τ)]` for the rule's stopping time, where `G` is the payoff with its
/// discounting applied. Exact up to rounding.
pub fn rule_value(model: &BinomialModel, payoff: &Payoff, rule: &StoppingRule) -> Result<f64> {
    let gains = lattice_gains(model, payoff)?;
    value_with_gains(model, &gains, rule, &mut ForwardScratch::default())
}

/// Every rule of a space, in lexicographic order of the interior decisions
/// (bit `i` of the counter = stop at the interior node with index `i`).
#[derive(Debug, Clone)]
pub struct RuleEnumerator {
    steps: usize,
    horizon: f64,
    space: RuleSpace,
    interior: usize,
    next: u64,
    end: u64,
}

impl Iterator for RuleEnumerator {
    type Item = StoppingRule;

    fn next(&mut self) -> Option<StoppingRule> {
        if self.next == self.end {
            return None;
        }
        let mask = self.next;
        self.next += 1;
        let count = self.space.node_count(self.steps);
        let decisions = (0..count)
            .map(|i| {
                if i >= self.interior || mask >> i & 1 == 1 {
                    Some(Decision::Stop)
                } else {
                    Some(Decision::Continue)
                }
            })
            .collect();
        Some(StoppingRule {
            steps: self.steps,
            horizon: self.horizon,
            space: self.space,
            decisions,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for RuleEnumerator {}

pub fn enumerate_rules(model: &BinomialModel, space: RuleSpace) -> Result<RuleEnumerator> {
    let steps = model.steps();
    if steps > space.enumeration_limit() {
        return Err(StopLabError::Size {
            space: space.name(),
            steps,
            exponent: match space {
                RuleSpace::Markov => steps * (steps + 1) / 2,
                RuleSpace::PathDependent => 1usize
                    .checked_shl(steps as u32)
                    .map_or(usize::MAX, |v| v - 1),
            },
        });
    }
    let interior = space.interior_nodes(steps);
    Ok(RuleEnumerator {
        steps,
        horizon: model.horizon(),
        space,
        interior,
        next: 0,
        end: 1u64 << interior,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForce {
    pub value: f64,
    /// Position of the first maximizing rule in enumeration order.
    pub best_index: usize,
    pub rule_count: usize,
}

/// Maximum of [`rule_value`] over every rule of `space`.
pub fn brute_force_value(
    model: &BinomialModel,
    payoff: &Payoff,
    space: RuleSpace,
) -> Result<BruteForce> {
    let mut best = BruteForce {
        value: f64::NEG_INFINITY,
        best_index: 0,
        rule_count: 0,
    };
    let rules = enumerate_rules(model, space)?;
    let gains = lattice_gains(model, payoff)?;
    let mut scratch = ForwardScratch::default();
    for (index, rule) in rules.enumerate() {
        let v = value_with_gains(model, &gains, &rule, &mut scratch)?;
        if v > best.value {
            best.value = v;
            best.best_index = index;
        }
        best.rule_count += 1;
    }
    Ok(best)
}

/// Finite mixture of pure rules: draw component `i` with probability
/// `weight_i`, independently of the tree, then follow it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomizedRule {
    components: Vec<(f64, StoppingRule)>,
}

const SIMPLEX_TOL: f64 = 1e-12;

impl RandomizedRule {
    pub fn new(components: Vec<(f64, StoppingRule)>) -> Result<Self> {
        if components.is_empty() {
            return domain("a randomized rule needs at least one component");
        }
        if let Some((w, _)) = components.iter().find(|(w, _)| !(*w >= 0.0) || !w.is_finite()) {
            return domain(format!("mixture weight {w} is not a finite non-negative number"));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return domain(format!("mixture weights sum to {total}, not 1"));
        }
        Ok(Self { components })
    }

    pub fn degenerate(rule: StoppingRule) -> Self {
        Self {
            components: vec![(1.0, rule)],
        }
    }

    pub fn components(&self) -> &[(f64, StoppingRule)] {
        &self.components
    }
}

/// `Σ weight_i · rule_value(rule_i)`.
pub fn randomized_value(model: &BinomialModel, payoff: &Payoff, rule: &RandomizedRule) -> Result<f64> {
    rule.components
        .iter()
        .map(|(w, r)| Ok(w * rule_value(model, payoff, r)?))
        .sum()
}

/// A random finite mixture of rules drawn uniformly from `space`.
pub fn random_mixture(
    model: &BinomialModel,
    space: RuleSpace,
    components: usize,
    rng: &mut impl Rng,
) -> Result<RandomizedRule> {
    let mut weights: Vec<f64> = (0..components.max(1)).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut rules = weights
        .into_iter()
        .map(|w| {
            let rule = StoppingRule::from_fn(model.steps(), model.horizon(), space, |_| {
                if rng.random::<bool>() {
                    Decision::Stop
                } else {
                    Decision::Continue
                }
            })?;
            Ok((w, rule))
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = rules.iter().map(|(w, _)| w).sum();
    // absorb rounding into the last weight so the simplex check is exact
    let last = rules.len() - 1;
    rules[last].0 += 1.0 - total;
    RandomizedRule::new(rules)
}

/// A random small model with a bounded payoff, for oracle sweeps.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub model: BinomialModel,
    pub payoff: Payoff,
}

pub fn random_instance(rng: &mut impl Rng, max_steps: usize) -> Result<OracleInstance> {
    let steps = rng.random_range(1..=max_steps.max(1));
    let horizon = rng.random_range(0.25..2.0);
    let s0 = rng.random_range(50.0..150.0);
    let up = rng.random_range(1.02..1.4);
    let down = rng.random_range(0.7..0.98);
    let step_rate = down + (up - down) * rng.random_range(0.05..0.95);
    let model = BinomialModel::new(steps, horizon, s0, up, down, step_rate)?;
    let strike = s0 * rng.random_range(0.7..1.3);
    let payoff = match rng.random_range(0..4) {
        0 => Payoff::put(strike, Discounting::PerStep)?,
        1 => {
            let cap = s0;
            Payoff::new("capped call", cap, Discounting::PerStep, move |_, x| {
                (x - strike).clamp(0.0, cap)
            })?
        }
        2 => {
            let phase = rng.random_range(0.0..6.0);
            Payoff::new("oscillating", 1.0, Discounting::None, move |t, x| {
                (x / 7.0 + 3.0 * t + phase).sin()
            })?
        }
        _ => {
            let rate = rng.random_range(-0.05..0.1);
            Payoff::new("butterfly", 0.25 * s0, Discounting::Continuous { rate }, move |_, x| {
                (0.25 * s0 - (x - strike).abs()).max(0.0)
            })?
        }
    };
    Ok(OracleInstance { model, payoff })
}

/// One row of an oracle comparison report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub model_id: usize,
    pub steps: usize,
    pub snell_value: f64,
    pub brute_value: f64,
    pub abs_diff: f64,
    pub rule_count: usize,
}

/// CSV `model_id,n,snell_value,brute_value,abs_diff,rule_count`.
pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut out = String::from("model_id,n,snell_value,brute_value,abs_diff,rule_count\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.model_id, r.steps, r.snell_value, r.brute_value, r.abs_diff, r.rule_count
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(steps: usize) -> BinomialModel {
        BinomialModel::new(steps, 1.0, 100.0, 1.1, 1.0 / 1.1, 1.0).unwrap()
    }

    #[test]
    fn node_indexing_round_trips() {
        for space in [RuleSpace::Markov, RuleSpace::PathDependent] {
            let rule = StoppingRule::from_fn(4, 1.0, space, |_| Decision::Continue).unwrap();
            for i in 0..space.node_count(4) {
                let node = node_at(space, i);
                let expected = if i < space.interior_nodes(4) {
                    Decision::Continue
                } else {
                    Decision::Stop
                };
                assert_eq!(rule.decision(node), Some(expected), "{space:?} {node}");
            }
        }
        assert_eq!(node_at(RuleSpace::Markov, 4), NodeId::Lattice { step: 2, ups: 1 });
        assert_eq!(
            node_at(RuleSpace::PathDependent, 5),
            NodeId::History { step: 2, prefix: 2 }
        );
        assert_eq!(NodeId::History { step: 3, prefix: 0b101 }.to_string(), "[+-+]");
    }

    #[test]
    fn terminal_continue_is_rejected() {
        let mut d = vec![Some(Decision::Continue); 6];
        assert!(StoppingRule::from_decisions(2, 1.0, RuleSpace::Markov, d.clone()).is_err());
        d[3..].iter_mut().for_each(|x| *x = None);
        let rule = StoppingRule::from_decisions(2, 1.0, RuleSpace::Markov, d).unwrap();
        assert_eq!(
            rule.decision(NodeId::Lattice { step: 2, ups: 0 }),
            Some(Decision::Stop)
        );
        assert!(StoppingRule::from_decisions(2, 1.0, RuleSpace::Markov, vec![None; 5]).is_err());
    }

    #[test]
    fn missing_reachable_decision_is_a_structural_error() {
        let mut d = vec![Some(Decision::Continue); 6];
        d[2] = None;
        d[3..].iter_mut().for_each(|x| *x = Some(Decision::Stop));
        let rule = StoppingRule::from_decisions(2, 1.0, RuleSpace::Markov, d).unwrap();
        let err = rule_value(&model(2), &Payoff::constant(1.0), &rule).unwrap_err();
        assert_eq!(
            err,
            StopLabError::Structural("no decision at reachable node (1,1)".into())
        );
        // unreachable hole: the root stops first
        let mut d = vec![Some(Decision::Stop), None, None, None, None, None];
        d[3..].iter_mut().for_each(|x| *x = Some(Decision::Stop));
        let rule = StoppingRule::from_decisions(2, 1.0, RuleSpace::Markov, d).unwrap();
        assert_eq!(rule_value(&model(2), &Payoff::constant(2.0), &rule).unwrap(), 2.0);
    }

    #[test]
    fn simple_rule_values() {
        let m = model(3);
        let put = Payoff::put(105.0, Discounting::None).unwrap();
        let root = StoppingRule::stop_at_root(&m, RuleSpace::Markov).unwrap();
        assert_eq!(rule_value(&m, &put, &root).unwrap(), 5.0);
        let end = StoppingRule::stop_at_horizon(&m, RuleSpace::PathDependent).unwrap();
        let one = Payoff::constant(1.0);
        assert!((rule_value(&m, &one, &end).unwrap() - 1.0).abs() < 1e-15);
        let total: f64 = stopping_distribution(&m, &end).unwrap().iter().map(|a| a.probability).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn enumeration_counts_and_limits() {
        assert_eq!(enumerate_rules(&model(1), RuleSpace::Markov).unwrap().count(), 2);
        assert_eq!(enumerate_rules(&model(2), RuleSpace::Markov).unwrap().len(), 8);
        let mut seen = 0usize;
        for rule in enumerate_rules(&model(4), RuleSpace::PathDependent).unwrap() {
            assert_eq!(rule.space(), RuleSpace::PathDependent);
            seen += 1;
        }
        assert_eq!(seen, 32_768);
        match enumerate_rules(&model(7), RuleSpace::Markov) {
            Err(StopLabError::Size { exponent: 28, steps: 7, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match enumerate_rules(&model(5), RuleSpace::PathDependent) {
            Err(StopLabError::Size { exponent: 31, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn enumeration_is_lexicographic_and_distinct() {
        let rules: Vec<_> = enumerate_rules(&model(2), RuleSpace::Markov).unwrap().collect();
        assert_eq!(rules[0].decision(NodeId::Lattice { step: 0, ups: 0 }), Some(Decision::Continue));
        assert_eq!(rules[1].decision(NodeId::Lattice { step: 0, ups: 0 }), Some(Decision::Stop));
        for (i, a) in rules.iter().enumerate() {
            for b in &rules[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn constant_payoff_brute_force() {
        let c = Payoff::constant(2.5);
        for space in [RuleSpace::Markov, RuleSpace::PathDependent] {
            let bf = brute_force_value(&model(3), &c, space).unwrap();
            assert!((bf.value - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_and_trivial_mixtures() {
        let m = model(2);
        let one = Payoff::constant(1.0);
        let root = StoppingRule::stop_at_root(&m, RuleSpace::Markov).unwrap();
        let end = StoppingRule::stop_at_horizon(&m, RuleSpace::Markov).unwrap();
        let mix = RandomizedRule::new(vec![(0.5, root.clone()), (0.5, end)]).unwrap();
        assert!((randomized_value(&m, &one, &mix).unwrap() - 1.0).abs() < 1e-15);
        let put = Payoff::put(100.0, Discounting::None).unwrap();
        let single = RandomizedRule::degenerate(root.clone());
        assert_eq!(
            randomized_value(&m, &put, &single).unwrap(),
            rule_value(&m, &put, &root).unwrap()
        );
        assert!(RandomizedRule::new(vec![(0.7, root.clone())]).is_err());
        assert!(RandomizedRule::new(vec![(-0.5, root.clone()), (1.5, root)]).is_err());
        assert!(RandomizedRule::new(vec![]).is_err());
    }

    #[test]
    fn stop_index_reads_only_the_past() {
        let m = model(4);
        let rule = StoppingRule::from_fn(4, 1.0, RuleSpace::PathDependent, |node| {
            if node.ups() == 2 {
                Decision::Stop
            } else {
                Decision::Continue
            }
        })
        .unwrap();
        assert_eq!(rule.stop_index(&[1, 1, -1, -1]).unwrap(), 2);
        assert_eq!(rule.stop_index(&[1, 1, 1, 1]).unwrap(), 2);
        assert_eq!(rule.stop_index(&[-1, -1, -1, 1]).unwrap(), 4);
        assert_eq!(rule.stopping_time(&[1, -1, 1, 1]).unwrap(), 0.75);
        assert!(rule.stop_index(&[1, 1]).is_err());
        let _ = m;
    }

    #[test]
    fn oracle_csv_header() {
        let csv = oracle_csv(&[OracleRow {
            model_id: 3,
            steps: 2,
            snell_value: 1.5,
            brute_value: 1.5,
            abs_diff: 0.0,
            rule_count: 8,
        }]);
        assert_eq!(
            csv,
            "model_id,n,snell_value,brute_value,abs_diff,rule_count\n3,2,1.5,1.5,0,8\n"
        );
    }
}
