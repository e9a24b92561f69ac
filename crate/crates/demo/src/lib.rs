//! Browser bindings: every export takes plain numbers and strings and
//! returns a JSON string the page renders.

use nonreg_core::analysis::{fisher_information, QuadratureRule};
use nonreg_core::estimators::{Estimator, EstimatorSettings};
use nonreg_core::likelihood::likelihood_curve;
use nonreg_core::limits::{limit_params, LimitSampler, Regime, Which};
use nonreg_core::simulate::simulate_sample;
use nonreg_core::windows::{level_threshold, optimal_window};
use nonreg_core::{CatalogId, Error, IntensityModel, RngStream, TrueIntensity};
use serde_json::json;
use wasm_bindgen::prelude::*;

const CURVE_POINTS: usize = 241;
const PROFILE_POINTS: usize = 401;

fn js(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn catalog(model: &str) -> Result<IntensityModel, JsValue> {
    let id: CatalogId = model.parse().map_err(js)?;
    IntensityModel::default_for(id).map_err(js)
}

/// Simulates n trajectories at theta0, returns the MLE, the Bayes estimate
/// and the log-likelihood curve over the parameter set.
#[wasm_bindgen]
pub fn estimate(model: &str, theta0: f64, n: usize, seed: u64) -> Result<String, JsValue> {
    let model = catalog(model)?;
    let truth = TrueIntensity::well_specified(model.clone(), theta0).map_err(js)?;
    let sample = simulate_sample(&truth, n, RngStream::new(seed, 0)).map_err(js)?;
    let settings = EstimatorSettings {
        grid_size: 201,
        bayes_panels: 800,
        ..EstimatorSettings::default()
    };
    let est = Estimator::new(&model, &settings, None).map_err(js)?;
    let mle = est.mle(&sample).map_err(js)?;
    let bayes = est.bayes(&sample).map_err(js)?;
    let curve = likelihood_curve(&model, &sample, CURVE_POINTS, None).map_err(js)?;
    Ok(json!({
        "events": sample.total_events(),
        "theta0": theta0,
        "mle": mle.value,
        "bayes": bayes.value,
        "thetas": curve.thetas,
        "values": curve.values,
    })
    .to_string())
}

/// Draws from the limit law of `regime` for a catalog model at theta0 and
/// bins the draws into a histogram.
#[wasm_bindgen]
pub fn limit_histogram(
    model: &str,
    regime: &str,
    theta0: f64,
    samples: usize,
    bins: usize,
    bayes: bool,
    seed: u64,
) -> Result<String, JsValue> {
    let model = catalog(model)?;
    let regime: Regime = regime.parse().map_err(js)?;
    let limit = limit_params(regime, &model, theta0, None, &QuadratureRule::default()).map_err(js)?;
    let which = if bayes { Which::Bayes } else { Which::Mle };
    let sampler = LimitSampler::new(&limit).map_err(js)?;
    let mut rng = RngStream::new(seed, 0).generator();
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        draws.push(sampler.sample(&mut rng, which).map_err(js)?);
    }
    let bins = bins.clamp(1, 400);
    let lo = draws.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &d in &draws {
        let k = (((d - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(json!({
        "regime": regime.as_str(),
        "rate_exponent": limit.rate_exponent,
        "lo": lo,
        "width": width,
        "counts": counts,
        "samples": samples,
    })
    .to_string())
}

/// Optimal window of the sine model at measure `mu_star`, with the Fisher
/// integrand profile it thresholds.
#[wasm_bindgen]
pub fn sine_window(theta: f64, mu_star: f64) -> Result<String, JsValue> {
    let model = catalog("WINDOW_SINE")?;
    let rule = QuadratureRule::default();
    let window = optimal_window(&model, theta, mu_star).map_err(js)?;
    let threshold = level_threshold(&model, theta, mu_star).map_err(js)?;
    let info_window = fisher_information(&model, theta, Some(&window), None, &rule).map_err(js)?;
    let info_full = fisher_information(&model, theta, None, None, &rule).map_err(js)?;
    let tau = model.horizon();
    let mut ts = Vec::with_capacity(PROFILE_POINTS);
    let mut integrand = Vec::with_capacity(PROFILE_POINTS);
    for k in 0..PROFILE_POINTS {
        let t = tau * k as f64 / (PROFILE_POINTS - 1) as f64;
        let d = model.theta_derivative(theta, t, 1, None).map_err(js)?;
        let l = model.evaluate(theta, t).map_err(js)?;
        ts.push(t);
        integrand.push(if l > 0.0 { d * d / l } else { 0.0 });
    }
    Ok(json!({
        "horizon": tau,
        "threshold": threshold,
        "intervals": window.intervals(),
        "info_window": info_window,
        "info_full": info_full,
        "t": ts,
        "integrand": integrand,
    })
    .to_string())
}
