//! The six experiments.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use stoplab::diagnostics::{
    aldous_csv, aldous_estimate_with_rules, aldous_probe_family, convergence_in_probability_estimate,
    coupled_stopping_times, coupling_errors, filtration_convergence_probe, filtration_csv,
    median_coupling_errors, wasserstein1, EmpiricalDistribution, LatticeWalk, ProbeEvent,
    DEFAULT_PROBE_RESOLUTION,
};
use stoplab::processes::{
    coupled_triple_csv, crr_path_from_signs, path_seed, BlackScholesParams, CoupledSampler,
    DEFAULT_DRIVER_INTERVALS, DEFAULT_EXTENSION, DEFAULT_REFINE_DEPTH,
};
use stoplab::stopping::{
    brute_force_value, oracle_csv, random_instance, random_mixture, randomized_value,
    OracleRow, RandomizedRule, RuleSpace,
};
use stoplab::trees::{
    build_crr_model, exercise_boundary, optimal_rule, snell_envelope, snell_value, Discounting,
    Payoff,
};

use crate::{CliError, Run, Settings};

/// Largest tree solved in full (for the exercise boundary); larger trees
/// keep one row in memory.
const FULL_SOLVE_MAX_STEPS: usize = 4096;

const ORACLE_TOLERANCE: f64 = 1e-12;

fn market(s: &Settings) -> Result<BlackScholesParams, CliError> {
    Ok(BlackScholesParams {
        s0: s.positive("s0", 100.0)?,
        rate: s.finite("rate", 0.05)?,
        sigma: s.positive("sigma", 0.2)?,
        drift: s.finite("drift", 0.0)?,
        horizon: s.positive("horizon", 1.0)?,
    })
}

fn seed(s: &Settings) -> Result<u64, CliError> {
    s.get("seed", crate::DEFAULT_SEED)
}

/// Payoff selected by `payoff` (`put`, `constant`, `zero`). Puts are
/// discounted per `discount`: `per_step` (`rho^-k`), `continuous`
/// (`exp(-r t)`) or `none`.
fn payoff(s: &Settings, default_discount: &str, rate: f64) -> Result<Payoff, CliError> {
    let kind: String = s.get("payoff", "put".to_string())?;
    match kind.as_str() {
        "put" => {
            let strike: f64 = s.get("strike", 100.0)?;
            if !(strike >= 0.0) || !strike.is_finite() {
                return Err(CliError::Config(format!("`strike` must be non-negative, got {strike}")));
            }
            let discounting = match s.get("discount", default_discount.to_string())?.as_str() {
                "per_step" => Discounting::PerStep,
                "continuous" => Discounting::Continuous { rate },
                "none" => Discounting::None,
                other => {
                    return Err(CliError::Config(format!(
                        "`discount` must be per_step, continuous or none, got `{other}`"
                    )))
                }
            };
            Ok(Payoff::put(strike, discounting)?)
        }
        "constant" => Ok(Payoff::constant(s.finite("payoff_constant", 1.0)?)),
        "zero" => Ok(Payoff::zero()),
        other => Err(CliError::Config(format!(
            "`payoff` must be put, constant or zero, got `{other}`"
        ))),
    }
}

fn sampler(s: &Settings, params: BlackScholesParams) -> Result<CoupledSampler, CliError> {
    Ok(CoupledSampler {
        params,
        driver_intervals: s.count("driver_intervals", DEFAULT_DRIVER_INTERVALS)?,
        extension: s.count("driver_extension", DEFAULT_EXTENSION)?,
        refine_depth: s.get("refine_depth", DEFAULT_REFINE_DEPTH)?,
    })
}

fn crr_normalization(params: &BlackScholesParams, n_list: &[usize]) -> Result<Value, CliError> {
    let per_n = n_list
        .iter()
        .map(|&n| {
            let m = build_crr_model(params, n)?;
            Ok(json!({
                "n": n,
                "up": m.up(),
                "down": m.down(),
                "step_rate": m.step_rate(),
                "p_star": m.p_star(),
            }))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(json!({
        "convention": "crr",
        "up": "exp(sigma * sqrt(T / n))",
        "down": "1 / up",
        "step_rate": "1 + r * T / n",
        "discount": "step_rate^-k at step k",
        "p_star": "(step_rate - down) / (up - down)",
        "per_n": per_n,
    }))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn richardson(params: &BlackScholesParams, payoff: &Payoff, n: usize) -> Result<Option<f64>, CliError> {
    if n < 2 || !n.is_multiple_of(2) {
        return Ok(None);
    }
    let fine = snell_value(&build_crr_model(params, n)?, payoff)?;
    let coarse = snell_value(&build_crr_model(params, n / 2)?, payoff)?;
    Ok(Some(2.0 * fine - coarse))
}

fn richardson_method(n: usize) -> String {
    format!(
        "two-point Richardson extrapolation 2*V({n}) - V({}) of CRR values; an approximation of the Black-Scholes value",
        n / 2
    )
}

pub(crate) fn price(s: &Settings) -> Result<Run, CliError> {
    let params = market(s)?;
    let payoff = payoff(s, "per_step", params.rate)?;
    let n_list = s.step_list("n_list", &[128, 512, 2048, 8192])?;
    let finest = *n_list.last().unwrap();
    let reference = richardson(&params, &payoff, finest)?;
    let boundary_defined = payoff.label().starts_with("put");
    let mut table = String::from("n,value,rel_diff_to_reference,boundary_start,boundary_end\n");
    let mut results = Vec::new();
    for &n in &n_list {
        let model = build_crr_model(&params, n)?;
        let (value, start, end) = if n <= FULL_SOLVE_MAX_STEPS {
            let sol = snell_envelope(&model, &payoff)?;
            let (start, end) = if boundary_defined {
                let b = exercise_boundary(&sol)?;
                (b[0].critical_price, b[n - 1].critical_price)
            } else {
                (None, None)
            };
            (sol.root_value(), start, end)
        } else {
            (snell_value(&model, &payoff)?, None, None)
        };
        let rel = reference.map(|r| ((value - r) / r).abs()).filter(|x| x.is_finite());
        writeln!(table, "{n},{value},{},{},{}", opt(rel), opt(start), opt(end)).unwrap();
        results.push(json!({
            "n": n,
            "value": value,
            "rel_diff_to_reference": rel,
            "boundary_start": start,
            "boundary_end": end,
        }));
    }
    Ok(Run {
        normalization: crr_normalization(&params, &n_list)?,
        reference_method: reference.map(|_| richardson_method(finest)),
        results: json!(results),
        summary: json!({ "reference_value": reference, "payoff": payoff.label() }),
        tables: vec![("table.csv".into(), table)],
    })
}

pub(crate) fn oracle_check(s: &Settings) -> Result<Run, CliError> {
    let models = s.count("models", 50)?;
    let max_steps = s.count("max_steps", RuleSpace::Markov.enumeration_limit())?;
    let mixture_models = s.count("mixture_models", 20)?;
    let mixtures = s.count("mixtures", 200)?;
    let components = s.count("mixture_components", 3)?;
    let seed = seed(s)?;
    if max_steps > RuleSpace::Markov.enumeration_limit() {
        return Err(CliError::Config(format!(
            "`max_steps` must be at most {}",
            RuleSpace::Markov.enumeration_limit()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(path_seed(seed, 0));
    let mut rows = Vec::new();
    for id in 0..models {
        let inst = random_instance(&mut rng, max_steps)?;
        let n = inst.model.steps();
        let snell = snell_envelope(&inst.model, &inst.payoff)?.root_value();
        for space in [RuleSpace::Markov, RuleSpace::PathDependent] {
            if n > space.enumeration_limit() {
                continue;
            }
            let brute = brute_force_value(&inst.model, &inst.payoff, space)?;
            rows.push(OracleRow {
                model_id: id,
                steps: n,
                snell_value: snell,
                brute_value: brute.value,
                abs_diff: (snell - brute.value).abs(),
                rule_count: brute.rule_count,
            });
        }
    }
    let max_diff = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);

    let space = RuleSpace::PathDependent;
    let mut rng = ChaCha8Rng::seed_from_u64(path_seed(seed, 1));
    let mut mixture_table =
        String::from("model_id,n,brute_value,max_mixture_value,degenerate_value,mixtures\n");
    let (mut max_excess, mut max_gap) = (f64::NEG_INFINITY, 0.0f64);
    for id in 0..mixture_models {
        let inst = random_instance(&mut rng, space.enumeration_limit())?;
        let best = brute_force_value(&inst.model, &inst.payoff, space)?.value;
        let mut top = f64::NEG_INFINITY;
        for _ in 0..mixtures {
            let mix = random_mixture(&inst.model, space, components, &mut rng)?;
            top = top.max(randomized_value(&inst.model, &inst.payoff, &mix)?);
        }
        let optimal = optimal_rule(&snell_envelope(&inst.model, &inst.payoff)?);
        let degenerate =
            randomized_value(&inst.model, &inst.payoff, &RandomizedRule::degenerate(optimal))?;
        max_excess = max_excess.max(top - best);
        max_gap = max_gap.max((degenerate - best).abs());
        writeln!(
            mixture_table,
            "{id},{},{best},{top},{degenerate},{mixtures}",
            inst.model.steps()
        )
        .unwrap();
    }
    Ok(Run {
        normalization: json!({
            "convention": "random",
            "description": "each model draws up in [1.02, 1.4), down in [0.7, 0.98) and a step rate strictly between them; payoffs are discounted per step, continuously or not at all",
        }),
        reference_method: Some("exhaustive enumeration of every adapted stopping rule".into()),
        results: json!(rows),
        summary: json!({
            "tolerance": ORACLE_TOLERANCE,
            "max_abs_diff": max_diff,
            "oracle_pass": max_diff <= ORACLE_TOLERANCE,
            "max_mixture_excess": max_excess,
            "mixture_pass": max_excess <= ORACLE_TOLERANCE,
            "max_degenerate_gap": max_gap,
            "degenerate_pass": max_gap <= ORACLE_TOLERANCE,
        }),
        tables: vec![
            ("table.csv".into(), oracle_csv(&rows)),
            ("mixtures.csv".into(), mixture_table),
        ],
    })
}

pub(crate) fn converge_values(s: &Settings) -> Result<Run, CliError> {
    let params = market(s)?;
    let payoff = payoff(s, "per_step", params.rate)?;
    let n_list = s.step_list("n_list", &[64, 128, 256, 512, 1024, 2048])?;
    let reference_n: usize = s.get("reference_n", 8192)?;
    let reference = richardson(&params, &payoff, reference_n)?;
    let values = n_list
        .iter()
        .map(|&n| Ok(snell_value(&build_crr_model(&params, n)?, &payoff)?))
        .collect::<Result<Vec<f64>, CliError>>()?;
    let mut table = String::from("n,value,diff_from_previous,rel_diff_to_reference\n");
    let mut results = Vec::new();
    let mut diffs = Vec::new();
    for (i, (&n, &v)) in n_list.iter().zip(&values).enumerate() {
        let diff = (i > 0).then(|| (v - values[i - 1]).abs());
        diffs.extend(diff);
        let rel = reference.map(|r| ((v - r) / r).abs()).filter(|x| x.is_finite());
        writeln!(table, "{n},{v},{},{}", opt(diff), opt(rel)).unwrap();
        results.push(json!({
            "n": n,
            "value": v,
            "diff_from_previous": diff,
            "rel_diff_to_reference": rel,
        }));
    }
    Ok(Run {
        normalization: crr_normalization(&params, &n_list)?,
        reference_method: reference.map(|_| richardson_method(reference_n)),
        results: json!(results),
        summary: json!({
            "reference_value": reference,
            "diffs_strictly_decreasing": strictly_decreasing(&diffs),
            "payoff": payoff.label(),
        }),
        tables: vec![("table.csv".into(), table)],
    })
}

pub(crate) fn converge_times(s: &Settings) -> Result<Run, CliError> {
    let params = market(s)?;
    let payoff = payoff(s, "continuous", params.rate)?;
    let n_list = s.step_list("n_list", &[64, 128, 256, 512, 1024])?;
    let n_paths = s.count("n_paths", 5000)?;
    let seed = seed(s)?;
    let tolerance = s.positive("time_tolerance", 0.05)? * params.horizon;
    let sampler = sampler(s, params)?;
    let times = coupled_stopping_times(&sampler, &payoff, &n_list, n_paths, seed)?;
    let laws = times
        .iter()
        .map(|t| Ok(EmpiricalDistribution::stopping_times(t.clone(), params.horizon)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut table = String::from("n,w1,paths,next_n,far_fraction\n");
    let mut results = Vec::new();
    let (mut w1s, mut fars) = (Vec::new(), Vec::new());
    for i in 0..n_list.len().saturating_sub(1) {
        let w1 = wasserstein1(&laws[i], &laws[i + 1]);
        let pairs: Vec<(f64, f64)> = times[i].iter().copied().zip(times[i + 1].iter().copied()).collect();
        let far = convergence_in_probability_estimate(&pairs, tolerance)?;
        writeln!(table, "{},{w1},{n_paths},{},{far}", n_list[i], n_list[i + 1]).unwrap();
        results.push(json!({
            "n": n_list[i],
            "next_n": n_list[i + 1],
            "w1": w1,
            "far_fraction": far,
            "mean_tau": laws[i].mean(),
        }));
        w1s.push(w1);
        fars.push(far);
    }
    Ok(Run {
        normalization: crr_normalization(&params, &n_list)?,
        reference_method: None,
        results: json!(results),
        summary: json!({
            "w1_strictly_decreasing": strictly_decreasing(&w1s),
            "far_fraction_strictly_decreasing": strictly_decreasing(&fars),
            "time_tolerance": tolerance,
            "payoff": payoff.label(),
            "mean_tau": laws.iter().map(EmpiricalDistribution::mean).collect::<Vec<_>>(),
        }),
        tables: vec![("table.csv".into(), table)],
    })
}

pub(crate) fn coupling(s: &Settings) -> Result<Run, CliError> {
    let params = market(s)?;
    let n_list = s.step_list("n_list", &[64, 256, 1024, 4096])?;
    let n_paths = s.count("n_paths", 50)?;
    let seed = seed(s)?;
    let export: bool = s.get("export_triples", false)?;
    let sampler = sampler(s, params)?;
    let medians = median_coupling_errors(&coupling_errors(&sampler, &n_list, n_paths, seed)?);
    let mut table = String::from("n,median_walk_error,median_price_error,paths\n");
    let mut results = Vec::new();
    for (&n, &(walk, price)) in n_list.iter().zip(&medians) {
        writeln!(table, "{n},{walk},{price},{n_paths}").unwrap();
        results.push(json!({ "n": n, "median_walk_error": walk, "median_price_error": price }));
    }
    let mut tables = vec![("table.csv".to_string(), table)];
    if export {
        let driver = sampler.driver(path_seed(seed, 0))?;
        let physical = params.with_symmetric_drift();
        for &n in &n_list {
            let c = sampler.couple(&driver, n)?;
            let crr = crr_path_from_signs(&c.signs, &physical, n)?;
            tables.push((format!("triples_n{n}.csv"), coupled_triple_csv(&c, &crr)?));
        }
    }
    let (first, last) = (medians[0], medians[medians.len() - 1]);
    Ok(Run {
        normalization: crr_normalization(&params, &n_list)?,
        reference_method: Some(
            "Black-Scholes path with drift sigma^2/2 driven by the same Brownian path".into(),
        ),
        results: json!(results),
        summary: json!({
            "walk_ratio_last_to_first": last.0 / first.0,
            "price_ratio_last_to_first": last.1 / first.1,
        }),
        tables,
    })
}

pub(crate) fn diagnose(s: &Settings) -> Result<Run, CliError> {
    let params = market(s)?;
    let payoff = payoff(s, "per_step", params.rate)?;
    let seed = seed(s)?;
    let probes: Vec<String> = s.list("probes", &["aldous".to_string(), "filtration".to_string()])?;
    if let Some(p) = probes.iter().find(|p| *p != "aldous" && *p != "filtration") {
        return Err(CliError::Config(format!("`probes`: unknown probe `{p}`")));
    }
    let mut long = String::from("probe,n,delta,epsilon,value,paths\n");
    let mut tables = Vec::new();
    let mut results = serde_json::Map::new();
    let mut summary = serde_json::Map::new();
    let mut normalization_n = Vec::new();

    if probes.iter().any(|p| p == "aldous") {
        let aldous_n = s.step_list("aldous_n", &[512])?;
        let deltas: Vec<f64> = s.list("deltas", &[0.001, 0.01, 0.1])?;
        let epsilon = s.positive("epsilon", 0.01 * params.s0)?;
        let paths = s.count("aldous_paths", 5000)?;
        if deltas.iter().any(|d| !(*d >= 0.0)) {
            return Err(CliError::Config("`deltas` must be non-negative".into()));
        }
        let mut rows = Vec::new();
        let mut detail = Vec::new();
        let mut monotone = true;
        for &n in &aldous_n {
            let model = build_crr_model(&params, n)?;
            let rules = aldous_probe_family(&model, std::slice::from_ref(&payoff))?;
            let walk = LatticeWalk::risk_neutral(&model);
            let mut previous: Option<(f64, f64)> = None;
            for &delta in &deltas {
                let e = aldous_estimate_with_rules(&walk, &rules, delta, epsilon, paths, seed)?;
                if let Some((d, v)) = previous {
                    if delta > d && e.estimate <= v {
                        monotone = false;
                    }
                }
                previous = Some((delta, e.estimate));
                writeln!(long, "aldous,{n},{delta},{epsilon},{},{paths}", e.estimate).unwrap();
                rows.push((n, delta, epsilon, e.estimate));
                detail.push(json!({
                    "n": n,
                    "delta": delta,
                    "epsilon": epsilon,
                    "estimate": e.estimate,
                    "probe_rule": e.probe,
                    "offset_steps": e.offset,
                }));
            }
        }
        normalization_n.extend(aldous_n);
        tables.push(("aldous.csv".to_string(), aldous_csv(&rows)));
        results.insert("aldous".into(), json!(detail));
        summary.insert("aldous_strictly_increasing_in_delta".into(), json!(monotone));
        summary.insert(
            "aldous_note".into(),
            json!("lower bound of the supremum over a finite probe family"),
        );
    }

    if probes.iter().any(|p| p == "filtration") {
        let n_list = s.step_list("n_list", &[16, 64, 256, 1024])?;
        let paths = s.count("n_paths", 2000)?;
        let resolution = s.count("resolution", DEFAULT_PROBE_RESOLUTION)?;
        let event = match s.get("event", "positive_terminal".to_string())?.as_str() {
            "positive_terminal" => ProbeEvent::PositiveTerminal,
            "sure" => ProbeEvent::Sure,
            "impossible" => ProbeEvent::Impossible,
            other => {
                return Err(CliError::Config(format!(
                    "`event` must be positive_terminal, sure or impossible, got `{other}`"
                )))
            }
        };
        if let Some(n) = n_list.iter().find(|n| !n.is_power_of_two()) {
            return Err(CliError::Config(format!("`n_list`: {n} is not a power of two")));
        }
        let sampler = sampler(s, params)?;
        let mut rows = Vec::new();
        for &n in &n_list {
            let d = filtration_convergence_probe(&sampler, n, &event, paths, seed, resolution)?;
            writeln!(long, "filtration,{n},,,{d},{paths}").unwrap();
            rows.push((n, d, paths));
        }
        let means: Vec<f64> = rows.iter().map(|r| r.1).collect();
        normalization_n.extend(n_list);
        tables.push(("filtration.csv".to_string(), filtration_csv(&rows)));
        results.insert(
            "filtration".into(),
            json!(rows
                .iter()
                .map(|(n, d, p)| json!({ "n": n, "mean_j1": d, "paths": p }))
                .collect::<Vec<_>>()),
        );
        summary.insert(
            "filtration_last_below_first".into(),
            json!(means.last() < means.first()),
        );
    }

    normalization_n.sort_unstable();
    normalization_n.dedup();
    tables.insert(0, ("table.csv".to_string(), long));
    Ok(Run {
        normalization: crr_normalization(&params, &normalization_n)?,
        reference_method: None,
        results: Value::Object(results),
        summary: Value::Object(summary),
        tables,
    })
}
