//! JSON-returning entry points for the browser demo.
//!
//! Every function returns a JSON string on success and a readable message on
//! failure. The same functions are plain Rust on native targets.

use serde_json::{json, Value};
use stoplab::diagnostics::{coupled_stopping_times, wasserstein1, EmpiricalDistribution};
use stoplab::paths::CadlagPath;
use stoplab::processes::{
    crr_path_from_signs, path_seed, sample_black_scholes, BlackScholesParams, CoupledSampler, Measure,
};
use stoplab::trees::{build_crr_model, exercise_boundary, snell_envelope, Discounting, Payoff};
use wasm_bindgen::prelude::*;

const MAX_TREE_STEPS: usize = 4096;
const MAX_WALK_STEPS: usize = 2048;
const MAX_PATHS: usize = 5000;
const MAX_PLOT_POINTS: usize = 1024;
/// Coarse driver resolution; band exits are refined below it on demand.
const DRIVER_INTERVALS: usize = 1 << 10;

fn bounded(name: &str, value: usize, low: usize, high: usize) -> Result<usize, String> {
    if (low..=high).contains(&value) {
        Ok(value)
    } else {
        Err(format!("{name} must lie in [{low}, {high}], got {value}"))
    }
}

fn market(s0: f64, rate: f64, sigma: f64, horizon: f64) -> Result<BlackScholesParams, String> {
    BlackScholesParams::new(s0, rate, sigma, 0.0, horizon).map_err(|e| e.to_string())
}

fn points(path: &CadlagPath) -> Value {
    let (times, values) = (path.grid().points(), path.values());
    let stride = times.len().div_ceil(MAX_PLOT_POINTS).max(1);
    let mut out: Vec<[f64; 2]> = (0..times.len())
        .step_by(stride)
        .map(|i| [times[i], values[i]])
        .collect();
    let last = times.len() - 1;
    if last % stride != 0 {
        out.push([times[last], values[last]]);
    }
    json!(out)
}

/// American put on the CRR tree: root value and the per-step critical price.
#[wasm_bindgen]
pub fn put_boundary(
    s0: f64,
    rate: f64,
    sigma: f64,
    strike: f64,
    horizon: f64,
    n: usize,
) -> Result<String, String> {
    let n = bounded("n", n, 1, MAX_TREE_STEPS)?;
    let params = market(s0, rate, sigma, horizon)?;
    let run = || -> stoplab::error::Result<Value> {
        let model = build_crr_model(&params, n)?;
        let solution = snell_envelope(&model, &Payoff::put(strike, Discounting::PerStep)?)?;
        let boundary: Vec<_> = exercise_boundary(&solution)?
            .iter()
            .map(|p| json!([p.time, p.critical_price]))
            .collect();
        Ok(json!({ "n": n, "value": solution.root_value(), "boundary": boundary }))
    };
    run().map(|v| v.to_string()).map_err(|e| e.to_string())
}

/// One Brownian path with its embedded walk, the CRR price path driven by the
/// walk and the Black-Scholes path driven by the Brownian path.
#[wasm_bindgen]
pub fn coupled_paths(
    s0: f64,
    rate: f64,
    sigma: f64,
    horizon: f64,
    n: usize,
    seed: u32,
) -> Result<String, String> {
    let n = bounded("n", n, 1, MAX_WALK_STEPS)?;
    let params = market(s0, rate, sigma, horizon)?;
    let run = || -> stoplab::error::Result<Value> {
        let sampler = CoupledSampler {
            driver_intervals: DRIVER_INTERVALS,
            ..CoupledSampler::new(params)
        };
        let c = sampler.couple(&sampler.driver(path_seed(u64::from(seed), 0))?, n)?;
        let physical = params.with_symmetric_drift();
        let price = sample_black_scholes(&physical, &c.brownian, Measure::Physical)?;
        let crr = crr_path_from_signs(&c.signs, &physical, n)?;
        Ok(json!({
            "n": n,
            "brownian": points(&c.brownian),
            "walk": points(&c.walk),
            "price": points(&price),
            "crr": points(&crr),
        }))
    };
    run().map(|v| v.to_string()).map_err(|e| e.to_string())
}

/// Histograms of the optimal put exercise time on the `n` and `2n` trees,
/// both read along the same Brownian drivers.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn stopping_time_histogram(
    s0: f64,
    rate: f64,
    sigma: f64,
    strike: f64,
    horizon: f64,
    n: usize,
    paths: usize,
    bins: usize,
    seed: u32,
) -> Result<String, String> {
    let n = bounded("n", n, 1, MAX_WALK_STEPS / 2)?;
    let paths = bounded("paths", paths, 1, MAX_PATHS)?;
    let bins = bounded("bins", bins, 1, 200)?;
    let params = market(s0, rate, sigma, horizon)?;
    let run = || -> stoplab::error::Result<Value> {
        let sampler = CoupledSampler {
            driver_intervals: DRIVER_INTERVALS,
            ..CoupledSampler::new(params)
        };
        let payoff = Payoff::put(strike, Discounting::PerStep)?;
        let times = coupled_stopping_times(&sampler, &payoff, &[n, 2 * n], paths, u64::from(seed))?;
        let counts: Vec<Vec<usize>> = times
            .iter()
            .map(|taus| {
                let mut c = vec![0; bins];
                for &tau in taus {
                    let b = ((tau / horizon) * bins as f64) as usize;
                    c[b.min(bins - 1)] += 1;
                }
                c
            })
            .collect();
        let means: Vec<f64> = times.iter().map(|t| t.iter().sum::<f64>() / t.len() as f64).collect();
        let w1 = wasserstein1(
            &EmpiricalDistribution::new(times[0].clone())?,
            &EmpiricalDistribution::new(times[1].clone())?,
        );
        let edges: Vec<f64> = (0..=bins).map(|b| horizon * b as f64 / bins as f64).collect();
        Ok(json!({
            "n": [n, 2 * n],
            "edges": edges,
            "counts": counts,
            "mean": means,
            "w1": w1,
        }))
    };
    run().map(|v| v.to_string()).map_err(|e| e.to_string())
}
