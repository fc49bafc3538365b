//! Browser bindings for three views of the calibrated nine-bin loop detector:
//! the predicted signature distribution of a coherent state, the `ε(n̄)`
//! curves of the three sweep fits on one simulated run, and the `P(m|n)`
//! table. Every export returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use loopsig::detector::{conditional_matrix, signature_distribution, DetectorConfig};
use loopsig::presets;
use loopsig::reconstruction::{default_grid, fit_records, FitMethod, FitResult};
use loopsig::simulator::{simulate_run, AfterpulseModel, SourceSpec};
use loopsig::{PhotonNumberDistribution, Signature};

const BINS: usize = presets::ANALYSED_BINS;
const TRUNCATION: usize = 30;
const MAX_CYCLES: u64 = 1_000_000;

fn config(dark_count: f64) -> Result<DetectorConfig, String> {
    presets::calibrated_config(BINS)
        .with_dark_count(dark_count)
        .map_err(|e| e.to_string())
}

#[derive(Serialize)]
pub struct SignatureBar {
    pub index: usize,
    pub pattern: String,
    pub probability: f64,
}

/// The `top` most likely signatures for a coherent state of mean `nbar`.
pub fn signature_bars(nbar: f64, dark_count: f64, top: usize) -> Result<Vec<SignatureBar>, String> {
    let state = PhotonNumberDistribution::coherent_truncated(nbar, TRUNCATION)
        .map_err(|e| e.to_string())?;
    let dist = signature_distribution(&config(dark_count)?, &state).map_err(|e| e.to_string())?;
    let mut bars: Vec<SignatureBar> = dist
        .probs
        .iter()
        .enumerate()
        .map(|(index, &probability)| SignatureBar {
            index,
            pattern: Signature::from_index(index as u64, BINS)
                .expect("index below 2^N")
                .pattern(),
            probability,
        })
        .collect();
    bars.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then(a.index.cmp(&b.index))
    });
    bars.truncate(top.max(1));
    Ok(bars)
}

#[derive(Serialize)]
pub struct Curve {
    pub method: &'static str,
    pub nbar: f64,
    pub epsilon_min: f64,
    pub epsilon: Vec<f64>,
}

#[derive(Serialize)]
pub struct FitCurves {
    pub grid: Vec<f64>,
    pub curves: Vec<Curve>,
}

fn curve(method: &'static str, fit: FitResult) -> Curve {
    Curve {
        method,
        nbar: fit.nbar,
        epsilon_min: fit.epsilon_min,
        epsilon: fit
            .sweep_curve
            .unwrap_or_default()
            .into_iter()
            .map(|p| p.epsilon)
            .collect(),
    }
}

/// Simulates one run and sweeps it with the raw binomial, corrected binomial
/// and signature models.
pub fn fit_curves(nbar: f64, afterpulse: f64, cycles: u64, seed: u64) -> Result<FitCurves, String> {
    if cycles > MAX_CYCLES {
        return Err(format!("at most {MAX_CYCLES} cycles in the browser"));
    }
    let config = config(presets::DARK_COUNT)?;
    let ap = AfterpulseModel::new(afterpulse).map_err(|e| e.to_string())?;
    let run = simulate_run(&config, &SourceSpec::Coherent { nbar }, cycles, &ap, seed)
        .map_err(|e| e.to_string())?;
    let grid = default_grid();
    let fit = |method| {
        fit_records(&run.records, &config, method, TRUNCATION, &grid).map_err(|e| e.to_string())
    };
    Ok(FitCurves {
        curves: vec![
            curve("binomial", fit(FitMethod::Binomial)?),
            curve(
                "binomial-corrected",
                fit(FitMethod::BinomialCorrected { afterpulse })?,
            ),
            curve("signature", fit(FitMethod::Signature)?),
        ],
        grid,
    })
}

/// `P(m|n)` rows for `m = 0..=N`.
pub fn matrix_rows(n_max: usize, dark_count: f64) -> Result<Vec<Vec<f64>>, String> {
    if n_max > 40 {
        return Err("n_max above 40 is not offered here".into());
    }
    let matrix = conditional_matrix(&config(dark_count)?, n_max).map_err(|e| e.to_string())?;
    Ok(matrix.entries)
}

fn to_js<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    value
        .and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = signatureBars)]
pub fn signature_bars_js(nbar: f64, dark_count: f64, top: usize) -> Result<String, JsError> {
    to_js(signature_bars(nbar, dark_count, top))
}

#[wasm_bindgen(js_name = fitCurves)]
pub fn fit_curves_js(
    nbar: f64,
    afterpulse: f64,
    cycles: u32,
    seed: u32,
) -> Result<String, JsError> {
    to_js(fit_curves(nbar, afterpulse, cycles.into(), seed.into()))
}

#[wasm_bindgen(js_name = conditionalMatrix)]
pub fn conditional_matrix_js(n_max: usize, dark_count: f64) -> Result<String, JsError> {
    to_js(matrix_rows(n_max, dark_count))
}
