//! Browser bindings: three JSON-in / JSON-out operations backing
//! `www/index.html`.

use multitime::bounds::{effective_dimension, variance_monte_carlo, BoundReport};
use multitime::channels::random_rank1_instrument;
use multitime::experiments::{build_random_bath, cell_seeds, random_pure_state, sweep, ExperimentConfig, ProtocolCounts, SweepRow, TimeMode};
use multitime::process::{MultitimeInstrument, ProcessSpec, Schedule};
use multitime::qmath::State;
use multitime::rng::derive_seed;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathRequest {
    pub d_e: usize,
    pub seed: u64,
    #[serde(default = "omega")]
    pub omega: f64,
    #[serde(default = "delta")]
    pub delta: f64,
    #[serde(default = "lambda")]
    pub lambda: f64,
}

fn omega() -> f64 {
    0.5
}
fn delta() -> f64 {
    0.2
}
fn lambda() -> f64 {
    0.1
}

#[derive(Debug, Serialize)]
pub struct DeffResponse {
    pub d_eff: f64,
    pub dim: usize,
    pub energies_min: f64,
    pub energies_max: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRequest {
    pub d_e_max: usize,
    pub d_e_step: usize,
    pub models: usize,
    pub mode: TimeMode,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundRequest {
    pub d_e: usize,
    pub k: usize,
    pub samples: usize,
    pub seed: u64,
}

const MAX_DIM: usize = 400;

fn parse<'a, T: Deserialize<'a>>(json: &'a str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("bad request: {e}"))
}

fn check_bath(d_e: usize) -> Result<(), String> {
    if d_e < 2 || 2 * d_e > MAX_DIM {
        return Err(format!("d_E must lie in 2..={}", MAX_DIM / 2));
    }
    Ok(())
}

/// `d_eff` of a random pure state under the random-bath Hamiltonian.
pub fn deff_json(request: &str) -> Result<String, String> {
    let r: BathRequest = parse(request)?;
    check_bath(r.d_e)?;
    let [sh, sp, _] = cell_seeds(r.seed, r.d_e, 0);
    let model = build_random_bath(r.omega, r.delta, r.lambda, r.d_e, sh);
    let h = model.spectral().map_err(|e| e.to_string())?;
    let psi = random_pure_state(2 * r.d_e, sp);
    let d_eff = effective_dimension(&h, &psi).map_err(|e| e.to_string())?;
    let e = h.energies();
    let resp = DeffResponse {
        d_eff,
        dim: model.dim(),
        energies_min: e[0],
        energies_max: e[e.len() - 1],
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

/// Small single-threaded non-Markovianity sweep, rows sorted by `d_eff`.
pub fn sweep_json(request: &str) -> Result<String, String> {
    let r: SweepRequest = parse(request)?;
    check_bath(r.d_e_max)?;
    if r.models == 0 || r.models > 20 || r.d_e_step == 0 {
        return Err("models must lie in 1..=20 and the step must be positive".into());
    }
    let cfg = ExperimentConfig {
        d_e_min: r.d_e_step.max(2),
        d_e_max: r.d_e_max,
        d_e_step: r.d_e_step,
        counts: ProtocolCounts {
            n_models: r.models,
            ..ProtocolCounts::default()
        },
        modes: vec![r.mode],
        seed: r.seed,
        ..ExperimentConfig::default()
    };
    let rows: Vec<SweepRow> = sweep(&cfg).map_err(|e| e.to_string())?.rows;
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

/// Monte Carlo variance against `(2^k − 1) d_S^{2k} / d_eff`.
pub fn bound_json(request: &str) -> Result<String, String> {
    let r: BoundRequest = parse(request)?;
    check_bath(r.d_e)?;
    if !(1..=3).contains(&r.k) || r.samples == 0 || r.samples > 5000 {
        return Err("k must lie in 1..=3 and samples in 1..=5000".into());
    }
    let [sh, sp, _] = cell_seeds(r.seed, r.d_e, 0);
    let model = build_random_bath(0.5, 0.2, 0.1, r.d_e, sh);
    let h = model.spectral().map_err(|e| e.to_string())?;
    let ket = random_pure_state(2 * r.d_e, sp).ket().cloned().expect("pure");
    let psi = State::from_ket(ket, vec![2, r.d_e]).map_err(|e| e.to_string())?;
    let spec = ProcessSpec::new(h, psi, 2, r.k, Schedule::Times(vec![1.0; r.k])).map_err(|e| e.to_string())?;
    let instr = MultitimeInstrument::new(
        (0..r.k).map(|j| random_rank1_instrument(derive_seed(r.seed, &[j as u64]), 2)).collect(),
    )
    .map_err(|e| e.to_string())?;
    let report: BoundReport =
        variance_monte_carlo(&spec, &instr, None, r.samples, derive_seed(r.seed, &[99])).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn effective_dimension_demo(request: &str) -> Result<String, JsValue> {
    deff_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn nonmarkov_sweep_demo(request: &str) -> Result<String, JsValue> {
    sweep_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn variance_bound_demo(request: &str) -> Result<String, JsValue> {
    bound_json(request).map_err(|e| JsValue::from_str(&e))
}
