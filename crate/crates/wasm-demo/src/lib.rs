//! Browser bindings for the demo page in `www/`.
//!
//! Each exported function takes plain numbers and strings and returns a JSON
//! document, so the page needs no generated type definitions. The work is
//! done by the `*_report` functions, which are ordinary Rust and tested
//! natively.

use bestarm::harness::{run_trial, TraceRecord};
use bestarm::oracle::{g_value, solve};
use bestarm::{BanditInstance, ExperimentConfig, FamilyKind, TrackingRule, Weights};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub t_star: f64,
    pub w_star: Vec<f64>,
    pub gap: f64,
    pub iterations: usize,
}

/// `g(w)` on the triangular grid `w = (i, j, n - i - j) / n` of the
/// three-arm simplex, row by row in `i`.
#[derive(Debug, Serialize)]
pub struct SurfaceReport {
    pub resolution: usize,
    pub values: Vec<f64>,
    pub max_value: f64,
    pub t_star: f64,
    pub w_star: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct TrialReport {
    pub tau: u64,
    pub recommended: usize,
    pub correct: bool,
    pub hit_cap: bool,
    pub counts: Vec<u64>,
    pub t: Vec<u64>,
    pub arm: Vec<usize>,
    pub z: Vec<f64>,
    pub beta: Vec<f64>,
}

pub fn instance(family: &str, sigma: f64, means: &[f64], m: usize) -> Result<BanditInstance, String> {
    let kind = match family {
        "bernoulli" => FamilyKind::Bernoulli,
        "poisson" => FamilyKind::Poisson,
        "gaussian" => FamilyKind::gaussian(sigma).map_err(|e| e.to_string())?,
        other => return Err(format!("unknown family `{other}`")),
    };
    BanditInstance::new(kind, means.to_vec(), m).map_err(|e| e.to_string())
}

pub fn oracle_report(inst: &BanditInstance) -> Result<OracleReport, String> {
    let sol = solve(inst, 1e-9).map_err(|e| e.to_string())?;
    Ok(OracleReport {
        t_star: sol.t_star,
        gap: sol.gap_certificate,
        iterations: sol.iterations,
        w_star: sol.w_star.into_inner(),
    })
}

pub fn surface_report(inst: &BanditInstance, resolution: usize) -> Result<SurfaceReport, String> {
    if inst.k() != 3 {
        return Err("the surface view needs exactly three arms".into());
    }
    let n = resolution.clamp(4, 400);
    let mut values = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let w = [i as f64, j as f64, (n - i - j) as f64].map(|x| x / n as f64);
            let g = Weights::new(w.to_vec())
                .and_then(|w| g_value(inst, &w))
                .map_err(|e| e.to_string())?;
            values.push(g);
        }
    }
    let oracle = oracle_report(inst)?;
    Ok(SurfaceReport {
        resolution: n,
        values,
        max_value: 1.0 / oracle.t_star,
        t_star: oracle.t_star,
        w_star: oracle.w_star,
    })
}

pub fn trial_report(
    inst: BanditInstance,
    delta: f64,
    rule: &str,
    seed: u64,
    max_rounds: u64,
) -> Result<TrialReport, String> {
    let rule: TrackingRule = rule.parse().map_err(|e: bestarm::Error| e.to_string())?;
    let mut cfg = ExperimentConfig::new(inst, rule, delta, 1, seed).map_err(|e| e.to_string())?;
    cfg.trace = true;
    cfg.max_rounds = max_rounds;
    let r = run_trial(&cfg, 0).map_err(|e| e.to_string())?;
    let rows: Vec<TraceRecord> = r
        .trace
        .unwrap_or_default()
        .into_iter()
        .filter(|row| row.z_value.is_some())
        .collect();
    Ok(TrialReport {
        tau: r.tau,
        recommended: r.recommended,
        correct: r.correct,
        hit_cap: r.hit_cap,
        counts: r.final_counts,
        t: rows.iter().map(|row| row.t).collect(),
        arm: rows.iter().map(|row| row.arm).collect(),
        z: rows.iter().filter_map(|row| row.z_value).collect(),
        beta: rows.iter().filter_map(|row| row.threshold).collect(),
    })
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// `T*` and `w*` as `{t_star, w_star, gap, iterations}`.
#[wasm_bindgen]
pub fn solve_oracle(family: &str, sigma: f64, means: Vec<f64>, m: usize) -> Result<String, JsError> {
    to_json(instance(family, sigma, &means, m).and_then(|inst| oracle_report(&inst)))
}

/// The max-min objective over the three-arm simplex, for a heat map.
#[wasm_bindgen]
pub fn objective_surface(
    family: &str,
    sigma: f64,
    means: Vec<f64>,
    m: usize,
    resolution: usize,
) -> Result<String, JsError> {
    to_json(instance(family, sigma, &means, m).and_then(|inst| surface_report(&inst, resolution)))
}

/// One traced Track-and-Stop run: `Z(t)` against `beta(t, delta)`.
#[wasm_bindgen]
pub fn simulate_trial(
    family: &str,
    sigma: f64,
    means: Vec<f64>,
    m: usize,
    delta: f64,
    rule: &str,
    seed: u32,
) -> Result<String, JsError> {
    to_json(instance(family, sigma, &means, m).and_then(|inst| trial_report(inst, delta, rule, seed as u64, 200_000)))
}
