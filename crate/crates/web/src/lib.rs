//! WebAssembly bindings for the browser demo. Every export takes plain numbers and returns a
//! JSON string; the same functions are callable natively for testing.

use serde::Serialize;
use sparse_mcmc::dynamics::{run_chain, Beta, ChainConfig, Init, Outcome, TraceRow};
use sparse_mcmc::gam::{GamInstance, GamParams};
use sparse_mcmc::landscape::{ell_star, gamma_profile, pca_thresholds, regression_thresholds, ProfileMode};
use wasm_bindgen::prelude::*;

/// Largest `C(p, k)` the profile view will enumerate, to keep the page responsive.
pub const PROFILE_LIMIT: u64 = 2_000_000;
/// Most iterations a single chain request may run.
pub const ITERATION_LIMIT: u64 = 2_000_000;

fn to_json(value: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Threshold set for `model` (`"pca"` or `"regression"`) as JSON.
pub fn thresholds_json(model: &str, t: u32, k: u32, p: u32, sigma2: f64) -> Result<String, String> {
    let th = match model {
        "pca" => pca_thresholds(t, k, p),
        "regression" => regression_thresholds(k, p, sigma2),
        other => return Err(format!("unknown model `{other}`")),
    }
    .map_err(|e| e.to_string())?;
    to_json(&th)
}

#[derive(Serialize)]
struct ChainView {
    lambda: f64,
    outcome: Outcome,
    max_overlap: u32,
    accepted: u64,
    rows: Vec<TraceRow>,
}

/// Runs one matrix-PCA chain with `lambda = k^exponent` from a random start.
pub fn chain_json(p: u32, k: u32, exponent: f64, beta: f64, max_iters: u64, seed: u64) -> Result<String, String> {
    if max_iters > ITERATION_LIMIT {
        return Err(format!("max_iters is capped at {ITERATION_LIMIT} in the browser"));
    }
    let lambda = (k as f64).powf(exponent);
    let inst = GamInstance::generate(GamParams::new(p, k, 2, lambda, seed)).map_err(|e| e.to_string())?;
    let config = ChainConfig {
        beta: Beta(beta),
        max_iters,
        record_every: (max_iters / 500).max(1),
        seed,
        ..ChainConfig::default()
    };
    let trace = run_chain(&inst, &config, Init::Random).map_err(|e| e.to_string())?;
    to_json(&ChainView {
        lambda,
        outcome: trace.outcome,
        max_overlap: trace.max_overlap,
        accepted: trace.accepted,
        rows: trace.rows,
    })
}

#[derive(Serialize)]
struct ProfileView {
    ell: Vec<u32>,
    gamma: Vec<f64>,
    gamma_prefix_max: Vec<f64>,
    ell_star: Option<u32>,
}

/// Exact overlap-shell maxima for a small matrix-PCA instance.
pub fn profile_json(p: u32, k: u32, lambda: f64, seed: u64) -> Result<String, String> {
    let total = sparse_mcmc::math::binomial(p as u64, k as u64).unwrap_or(u64::MAX);
    if total > PROFILE_LIMIT {
        return Err(format!("C({p},{k}) = {total} supports is too many for the browser (limit {PROFILE_LIMIT})"));
    }
    let inst = GamInstance::generate(GamParams::new(p, k, 2, lambda, seed)).map_err(|e| e.to_string())?;
    let profile = gamma_profile(&inst, k, ProfileMode::Exact).map_err(|e| e.to_string())?;
    to_json(&ProfileView {
        ell: profile.ell,
        gamma: profile.gamma,
        gamma_prefix_max: profile.gamma_prefix_max,
        ell_star: ell_star(lambda, k, p, 2).ok(),
    })
}

#[wasm_bindgen]
pub fn thresholds(model: &str, t: u32, k: u32, p: u32, sigma2: f64) -> Result<String, JsValue> {
    thresholds_json(model, t, k, p, sigma2).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate_chain(p: u32, k: u32, exponent: f64, beta: f64, max_iters: u32, seed: u32) -> Result<String, JsValue> {
    chain_json(p, k, exponent, beta, max_iters as u64, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn overlap_profile(p: u32, k: u32, lambda: f64, seed: u32) -> Result<String, JsValue> {
    profile_json(p, k, lambda, seed as u64).map_err(|e| JsValue::from_str(&e))
}
