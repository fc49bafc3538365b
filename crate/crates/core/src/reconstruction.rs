//! Estimating input photostatistics from detection records.
//!
//! Two families of fit share one distance, the plain sum of squared
//! differences between predicted and observed probability vectors:
//!
//! * Poisson sweeps evaluate the distance for truncated coherent states over
//!   a grid of mean photon numbers, either on per-bin click probabilities
//!   (each bin treated as an independent detector of efficiency `η_i`) or on
//!   the full signature distribution.
//! * Free-form fits search all `K + 1` diagonal coefficients with the simplex
//!   minimiser, adding `(Tr ρ − 1)²` to the distance.
//!
//! Afterpulse correction only applies to click probabilities. Signature fits
//! always see raw data.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::detector::{
    click_prob_binomial, DetectorConfig, Provenance, SignatureDistribution, SignatureResponse,
};
use crate::error::{domain, Result};
use crate::optim::{nelder_mead, OptimOptions};
use crate::simulator::CycleRecord;
use crate::states::{PhotonNumberDistribution, RawDiagonal};

/// Per-bin click probabilities, bin 1 first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickProbabilities {
    pub probs: Vec<f64>,
    pub sample_count: u64,
    /// Set when a correction pushed some value outside `[0, 1]`.
    #[serde(default)]
    pub clamped: bool,
}

/// Fraction of cycles in which each bin clicked.
pub fn estimate_click_probs(records: &[CycleRecord]) -> Result<ClickProbabilities> {
    let Some(first) = records.first() else {
        return domain("no records to estimate click probabilities from");
    };
    let bins = first.signature.bins();
    let mut counts = vec![0u64; bins];
    for r in records {
        if r.signature.bins() != bins {
            return domain("records disagree on the bin count");
        }
        for (i, c) in counts.iter_mut().enumerate() {
            if r.signature.clicked(i) {
                *c += 1;
            }
        }
    }
    let total = records.len() as f64;
    Ok(ClickProbabilities {
        probs: counts.iter().map(|c| *c as f64 / total).collect(),
        sample_count: records.len() as u64,
        clamped: false,
    })
}

/// Empirical frequency of each of the `2^N` signatures.
pub fn estimate_signature_probs(
    records: &[CycleRecord],
    bins: usize,
) -> Result<SignatureDistribution> {
    if records.is_empty() {
        return domain("no records to estimate signature probabilities from");
    }
    if bins > 30 {
        return domain(format!(
            "{bins} bins is too many for a dense signature table"
        ));
    }
    let mut counts = vec![0u64; 1 << bins];
    for r in records {
        if r.signature.bins() != bins {
            return domain(format!(
                "record {} has {} bins, expected {bins}",
                r.cycle,
                r.signature.bins()
            ));
        }
        counts[r.signature.index() as usize] += 1;
    }
    let total = records.len() as f64;
    Ok(SignatureDistribution {
        bins,
        probs: counts.iter().map(|c| *c as f64 / total).collect(),
        provenance: Provenance::Empirical {
            sample_count: records.len() as u64,
        },
    })
}

/// First-order dark-count and afterpulse correction of click probabilities:
/// bin 1 becomes `p_dc + p(1)(1 − p_dc)`, bin `i ≥ 2` becomes
/// `p(i) − p_dc − p_a·p(i − 1)`, using the uncorrected previous bin.
pub fn afterpulse_correct(
    p: &ClickProbabilities,
    dark_count: f64,
    afterpulse: f64,
) -> ClickProbabilities {
    if dark_count > 0.05 {
        warn!("first-order afterpulse correction assumes p_dc << 1, got {dark_count}");
    }
    let mut clamped = p.clamped;
    let probs = p
        .probs
        .iter()
        .enumerate()
        .map(|(i, &raw)| {
            let v = if i == 0 {
                dark_count + raw * (1.0 - dark_count)
            } else {
                raw - dark_count - afterpulse * p.probs[i - 1]
            };
            if !(0.0..=1.0).contains(&v) {
                clamped = true;
            }
            v.clamp(0.0, 1.0)
        })
        .collect();
    ClickProbabilities {
        probs,
        sample_count: p.sample_count,
        clamped,
    }
}

/// `ε = Σ_i (p_i − p̂_i)²`, not divided by the vector length.
pub fn mse(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() {
        return domain(format!(
            "cannot compare {} predicted values with {} observed",
            predicted.len(),
            observed.len()
        ));
    }
    Ok(squared_distance(predicted, observed))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// What a Poisson sweep compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepModel {
    /// Per-bin click probabilities against the binomial click model.
    Binomial,
    /// Afterpulse-corrected click probabilities. Predictions go through the
    /// same correction, with no afterpulse term, so both sides carry the
    /// same dark-count treatment.
    CorrectedBinomial,
    /// The full signature distribution.
    Signature,
}

/// Method names accepted by the record-level fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Binomial,
    BinomialCorrected { afterpulse: f64 },
    Signature,
}

/// Sampled point of an `ε(n̄)` curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub nbar: f64,
    pub epsilon: f64,
}

/// Free-form parametrisation of the diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// Coefficients are searched directly; nothing keeps them non-negative.
    #[default]
    PaperFaithful,
    /// Coefficients are squares of the search variables.
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeFormOptions {
    pub mode: FitMode,
    /// Weight of the `(Tr ρ − 1)²` term.
    pub trace_weight: f64,
    pub optim: OptimOptions,
}

impl Default for FreeFormOptions {
    fn default() -> Self {
        Self {
            mode: FitMode::PaperFaithful,
            trace_weight: 1.0,
            optim: OptimOptions::default(),
        }
    }
}

/// Outcome of a sweep or free-form fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Estimated mean photon number. For sweeps this is the refined minimum.
    pub nbar: f64,
    /// Fitted diagonal exactly as the fit left it.
    pub coefficients: RawDiagonal,
    /// Normalised distribution, present only when every coefficient is
    /// non-negative.
    pub estimate: Option<PhotonNumberDistribution>,
    pub epsilon_min: f64,
    pub sweep_curve: Option<Vec<SweepPoint>>,
    /// Grid point with the smallest `ε`, before refinement.
    pub grid_argmin: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `Tr ρ − 1` of the raw coefficients.
    pub trace_deviation: f64,
    pub negative_coefficients: Vec<usize>,
    pub physical: bool,
}

impl FitResult {
    fn from_coefficients(coefficients: RawDiagonal) -> Self {
        let estimate = if coefficients.is_physical() {
            coefficients.to_distribution().ok()
        } else {
            None
        };
        Self {
            nbar: coefficients.mean_photon_number(),
            trace_deviation: coefficients.trace() - 1.0,
            negative_coefficients: coefficients.negative_indices(),
            physical: estimate.is_some(),
            estimate,
            coefficients,
            epsilon_min: 0.0,
            sweep_curve: None,
            grid_argmin: None,
            iterations: 0,
            converged: false,
        }
    }

    /// Sweep curve as `nbar,epsilon` CSV.
    pub fn curve_csv(&self) -> Option<String> {
        self.sweep_curve.as_ref().map(|curve| {
            let mut out = String::from("nbar,epsilon\n");
            for p in curve {
                out.push_str(&format!("{},{:e}\n", p.nbar, p.epsilon));
            }
            out
        })
    }

    /// Second difference of `ε` at the grid minimum, divided by the squared
    /// spacing and by `ε` there: the curvature of `ln ε` at its minimum.
    /// `None` at the ends of the grid or without a curve.
    pub fn relative_curvature(&self) -> Option<f64> {
        let curve = self.sweep_curve.as_ref()?;
        let k = argmin(curve.iter().map(|p| p.epsilon))?;
        if k == 0 || k + 1 >= curve.len() {
            return None;
        }
        let (a, b, c) = (curve[k - 1], curve[k], curve[k + 1]);
        let h = 0.5 * (c.nbar - a.nbar);
        let second = (a.epsilon - 2.0 * b.epsilon + c.epsilon) / (h * h);
        Some(second / b.epsilon)
    }
}

fn argmin(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// `steps` evenly spaced points from `lo` to `hi` inclusive.
pub fn nbar_grid(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 2 || !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi <= lo {
        return domain(format!("invalid grid {lo}:{hi}:{steps}"));
    }
    let h = (hi - lo) / (steps - 1) as f64;
    Ok((0..steps).map(|i| lo + h * i as f64).collect())
}

/// Default grid: 151 points over `[0, 15]`.
pub fn default_grid() -> Vec<f64> {
    nbar_grid(0.0, 15.0, 151).expect("static grid is valid")
}

/// Vertex of the parabola through three points, kept within the outer two.
fn parabola_vertex(a: SweepPoint, b: SweepPoint, c: SweepPoint) -> f64 {
    let (x0, x1, x2) = (a.nbar, b.nbar, c.nbar);
    let (f0, f1, f2) = (a.epsilon, b.epsilon, c.epsilon);
    let num = (x1 - x0).powi(2) * (f1 - f2) - (x1 - x2).powi(2) * (f1 - f0);
    let den = (x1 - x0) * (f1 - f2) - (x1 - x2) * (f1 - f0);
    if den.abs() < f64::MIN_POSITIVE || !den.is_finite() {
        return x1;
    }
    let x = x1 - 0.5 * num / den;
    if x.is_finite() {
        x.clamp(x0, x2)
    } else {
        x1
    }
}

/// Produces the predicted observation vector for a candidate state.
enum Predictor {
    Clicks {
        efficiencies: Vec<f64>,
        dark_count: f64,
        corrected: bool,
    },
    Signatures(SignatureResponse),
}

impl Predictor {
    fn new(model: SweepModel, config: &DetectorConfig, k: usize) -> Result<Self> {
        Ok(match model {
            SweepModel::Binomial | SweepModel::CorrectedBinomial => Predictor::Clicks {
                efficiencies: config.bin_efficiencies(),
                dark_count: config.dark_count(),
                corrected: model == SweepModel::CorrectedBinomial,
            },
            SweepModel::Signature => Predictor::Signatures(SignatureResponse::new(config, k)?),
        })
    }

    fn len(&self) -> usize {
        match self {
            Predictor::Clicks { efficiencies, .. } => efficiencies.len(),
            Predictor::Signatures(r) => r.signature_count(),
        }
    }

    fn predict(&self, state: &PhotonNumberDistribution) -> Vec<f64> {
        match self {
            Predictor::Clicks {
                efficiencies,
                dark_count,
                corrected,
            } => {
                let probs: Vec<f64> = efficiencies
                    .iter()
                    .map(|eta| click_prob_binomial(*eta, state, *dark_count))
                    .collect();
                if *corrected {
                    let raw = ClickProbabilities {
                        probs,
                        sample_count: 0,
                        clamped: false,
                    };
                    afterpulse_correct(&raw, *dark_count, 0.0).probs
                } else {
                    probs
                }
            }
            Predictor::Signatures(r) => r.predict(state.probs()),
        }
    }
}

/// Fits a truncated coherent state by scanning `grid` and refining the
/// discrete minimum with a three-point parabola.
pub fn poisson_sweep_fit(
    observed: &[f64],
    model: SweepModel,
    config: &DetectorConfig,
    k: usize,
    grid: &[f64],
) -> Result<FitResult> {
    if grid.is_empty() {
        return domain("empty n̄ grid");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] < 0.0 {
        return domain("n̄ grid must be non-negative and strictly increasing");
    }
    let predictor = Predictor::new(model, config, k)?;
    if observed.len() != predictor.len() {
        return domain(format!(
            "{model:?} model expects {} observed values, got {}",
            predictor.len(),
            observed.len()
        ));
    }

    let curve = grid
        .iter()
        .map(|&nbar| {
            let state = PhotonNumberDistribution::coherent_truncated(nbar, k)?;
            let epsilon = squared_distance(&predictor.predict(&state), observed);
            Ok(SweepPoint { nbar, epsilon })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = argmin(curve.iter().map(|p| p.epsilon)).expect("grid is not empty");
    let refined = if best > 0 && best + 1 < curve.len() {
        parabola_vertex(curve[best - 1], curve[best], curve[best + 1])
    } else {
        curve[best].nbar
    };

    let state = PhotonNumberDistribution::coherent_truncated(refined, k)?;
    let mut result = FitResult::from_coefficients(RawDiagonal::from(&state));
    result.nbar = refined;
    result.epsilon_min = curve[best].epsilon;
    result.grid_argmin = Some(curve[best].nbar);
    result.iterations = curve.len();
    result.converged = true;
    result.sweep_curve = Some(curve);
    Ok(result)
}

/// Free-form search over the `K + 1` diagonal coefficients.
pub fn free_form_fit(
    observed: &SignatureDistribution,
    config: &DetectorConfig,
    k: usize,
    init: &PhotonNumberDistribution,
    options: &FreeFormOptions,
) -> Result<FitResult> {
    if observed.bins != config.bins() || observed.probs.len() != 1 << config.bins() {
        return domain(format!(
            "observed signatures cover {} bins, detector has {}",
            observed.bins,
            config.bins()
        ));
    }
    if init.truncation() != k {
        return domain(format!(
            "initial state has K = {}, fit asked for K = {k}",
            init.truncation()
        ));
    }
    if !(options.trace_weight.is_finite() && options.trace_weight >= 0.0) {
        return domain("trace penalty weight must be finite and >= 0");
    }
    let response = SignatureResponse::new(config, k)?;
    let target = &observed.probs;
    let weight = options.trace_weight;
    let objective_on = |rho: &[f64]| -> f64 {
        let trace: f64 = rho.iter().sum();
        weight * (trace - 1.0).powi(2) + squared_distance(&response.predict(rho), target)
    };

    let (coefficients, report) = match options.mode {
        FitMode::PaperFaithful => {
            let report = nelder_mead(objective_on, init.probs(), &options.optim)?;
            (report.best_point.clone(), report)
        }
        FitMode::Physical => {
            let start: Vec<f64> = init.probs().iter().map(|p| p.sqrt()).collect();
            let mut rho = vec![0.0; k + 1];
            let report = nelder_mead(
                |y: &[f64]| {
                    for (r, v) in rho.iter_mut().zip(y) {
                        *r = v * v;
                    }
                    objective_on(&rho)
                },
                &start,
                &options.optim,
            )?;
            (report.best_point.iter().map(|v| v * v).collect(), report)
        }
    };

    let mut result = FitResult::from_coefficients(RawDiagonal::new(coefficients));
    result.epsilon_min = report.best_value;
    result.iterations = report.iterations;
    result.converged = report.converged;
    Ok(result)
}

/// Sweep fit straight from records, applying the afterpulse correction
/// first when asked.
pub fn fit_records(
    records: &[CycleRecord],
    config: &DetectorConfig,
    method: FitMethod,
    k: usize,
    grid: &[f64],
) -> Result<FitResult> {
    match method {
        FitMethod::Signature => {
            let observed = estimate_signature_probs(records, config.bins())?;
            poisson_sweep_fit(&observed.probs, SweepModel::Signature, config, k, grid)
        }
        FitMethod::Binomial => {
            let clicks = estimate_click_probs(records)?;
            check_bins(&clicks, config)?;
            poisson_sweep_fit(&clicks.probs, SweepModel::Binomial, config, k, grid)
        }
        FitMethod::BinomialCorrected { afterpulse } => {
            let clicks = estimate_click_probs(records)?;
            check_bins(&clicks, config)?;
            let corrected = afterpulse_correct(&clicks, config.dark_count(), afterpulse);
            poisson_sweep_fit(
                &corrected.probs,
                SweepModel::CorrectedBinomial,
                config,
                k,
                grid,
            )
        }
    }
}

fn check_bins(clicks: &ClickProbabilities, config: &DetectorConfig) -> Result<()> {
    if clicks.probs.len() != config.bins() {
        return domain(format!(
            "records have {} bins, detector has {}",
            clicks.probs.len(),
            config.bins()
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{signature_distribution, Signature};
    use crate::presets;
    use crate::simulator::{simulate_run, AfterpulseModel, SourceSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn record(cycle: u64, clicked: &[usize], bins: usize) -> CycleRecord {
        CycleRecord {
            cycle,
            signature: Signature::from_clicks(clicked, bins).unwrap(),
        }
    }

    #[test]
    fn click_estimates() {
        let zeros: Vec<_> = (0..4).map(|c| record(c, &[], 3)).collect();
        assert_eq!(estimate_click_probs(&zeros).unwrap().probs, vec![0.0; 3]);
        let two = [record(0, &[0], 4), record(1, &[0, 1], 4)];
        assert_eq!(
            estimate_click_probs(&two).unwrap().probs,
            vec![1.0, 0.5, 0.0, 0.0]
        );
        assert!(estimate_click_probs(&[]).is_err());
    }

    #[test]
    fn signature_estimates() {
        let one = [record(0, &[0, 2], 9)];
        let dist = estimate_signature_probs(&one, 9).unwrap();
        assert_eq!(dist.probs[5], 1.0);
        assert_eq!(dist.total(), 1.0);
        let two = [record(0, &[1], 3), record(1, &[2], 3)];
        let dist = estimate_signature_probs(&two, 3).unwrap();
        assert_eq!((dist.probs[2], dist.probs[4]), (0.5, 0.5));
        assert!(estimate_signature_probs(&[], 3).is_err());
        assert!(estimate_signature_probs(&two, 4).is_err());
    }

    #[test]
    fn signature_estimate_matches_simulator() {
        let config = presets::calibrated_config(9);
        let run = simulate_run(
            &config,
            &SourceSpec::Coherent { nbar: 6.5 },
            20_000,
            &AfterpulseModel::none(),
            4,
        )
        .unwrap();
        let dist = estimate_signature_probs(&run.records, 9).unwrap();
        assert_eq!(dist, run.empirical_signature);
        assert_eq!(
            estimate_click_probs(&run.records).unwrap().probs,
            run.empirical_clicks
        );
    }

    #[test]
    fn click_estimates_track_model_marginals() {
        let config = presets::calibrated_config(9);
        let cycles = 150_000.0;
        let run = simulate_run(
            &config,
            &SourceSpec::Coherent { nbar: 6.5 },
            cycles as u64,
            &AfterpulseModel::none(),
            12,
        )
        .unwrap();
        let clicks = estimate_click_probs(&run.records).unwrap();
        let state = PhotonNumberDistribution::coherent_truncated(6.5, 30).unwrap();
        let model = signature_distribution(&config, &state).unwrap();
        for (i, p) in clicks.probs.iter().enumerate() {
            let m = model.bin_marginal(i);
            assert!(
                (p - m).abs() < 4.0 * (m * (1.0 - m) / cycles).sqrt(),
                "bin {i}"
            );
        }
    }

    #[test]
    fn correction_without_noise_is_identity() {
        let p = ClickProbabilities {
            probs: vec![0.1, 0.05, 0.02],
            sample_count: 10,
            clamped: false,
        };
        assert_eq!(afterpulse_correct(&p, 0.0, 0.0).probs, p.probs);
    }

    #[test]
    fn correction_by_hand() {
        let p = ClickProbabilities {
            probs: vec![0.1, 0.01, 0.005],
            sample_count: 10,
            clamped: false,
        };
        let c = afterpulse_correct(&p, 9.6e-4, 0.03);
        assert_relative_eq!(c.probs[0], 9.6e-4 + 0.1 * (1.0 - 9.6e-4), epsilon = 1e-15);
        assert_relative_eq!(c.probs[1], 6.04e-3, epsilon = 1e-15);
        assert!(!c.clamped);
    }

    #[test]
    fn correction_clamps_and_flags() {
        let p = ClickProbabilities {
            probs: vec![0.5, 0.001],
            sample_count: 10,
            clamped: false,
        };
        let c = afterpulse_correct(&p, 0.01, 0.5);
        assert_eq!(c.probs[1], 0.0);
        assert!(c.clamped);
    }

    #[test]
    fn second_bin_takes_largest_correction() {
        let etas = &presets::BIN_EFFICIENCIES[..9];
        let probs: Vec<f64> = etas.iter().map(|e| presets::DARK_COUNT + 6.5 * e).collect();
        let p = ClickProbabilities {
            probs: probs.clone(),
            sample_count: 1,
            clamped: false,
        };
        let c = afterpulse_correct(&p, presets::DARK_COUNT, presets::AFTERPULSE);
        let shifts: Vec<f64> = c
            .probs
            .iter()
            .zip(&probs)
            .map(|(a, b)| (a - b).abs())
            .collect();
        let largest = argmin(shifts.iter().map(|s| -s)).unwrap();
        assert_eq!(largest, 1);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_relative_eq!(
            mse(&[0.5, 0.5], &[0.6, 0.4]).unwrap(),
            0.02,
            epsilon = 1e-15
        );
        assert!(mse(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn grid_validation() {
        assert_eq!(default_grid().len(), 151);
        assert_relative_eq!(default_grid()[150], 15.0);
        assert!(nbar_grid(1.0, 1.0, 5).is_err());
        assert!(nbar_grid(0.0, 1.0, 1).is_err());
        let config = presets::calibrated_config(9);
        assert!(poisson_sweep_fit(&[0.0; 9], SweepModel::Binomial, &config, 10, &[]).is_err());
        assert!(
            poisson_sweep_fit(&[0.0; 9], SweepModel::Binomial, &config, 10, &[2.0, 1.0]).is_err()
        );
    }

    #[test]
    fn basis_mismatch_is_rejected() {
        let config = presets::calibrated_config(9);
        let grid = default_grid();
        assert!(poisson_sweep_fit(&[0.0; 9], SweepModel::Signature, &config, 10, &grid).is_err());
        assert!(poisson_sweep_fit(&[0.0; 512], SweepModel::Binomial, &config, 10, &grid).is_err());
    }

    #[test]
    fn exact_signature_data_recovers_mean() {
        let config = presets::calibrated_config(9);
        let state = PhotonNumberDistribution::coherent_truncated(6.0, 30).unwrap();
        let observed = signature_distribution(&config, &state).unwrap();
        let fit = poisson_sweep_fit(
            &observed.probs,
            SweepModel::Signature,
            &config,
            30,
            &default_grid(),
        )
        .unwrap();
        assert!((fit.nbar - 6.0).abs() < 0.01);
        assert!(fit.epsilon_min <= 1e-18);
        let curve = fit.sweep_curve.as_ref().unwrap();
        assert_eq!(
            fit.epsilon_min,
            curve
                .iter()
                .map(|p| p.epsilon)
                .fold(f64::INFINITY, f64::min)
        );
        assert!(fit.curve_csv().unwrap().starts_with("nbar,epsilon\n0,"));
    }

    #[test]
    fn exact_click_data_recovers_mean() {
        let config = presets::calibrated_config(9);
        let state = PhotonNumberDistribution::coherent_truncated(3.7, 30).unwrap();
        let observed: Vec<f64> = config
            .bin_efficiencies()
            .iter()
            .map(|eta| click_prob_binomial(*eta, &state, config.dark_count()))
            .collect();
        let fit = poisson_sweep_fit(
            &observed,
            SweepModel::Binomial,
            &config,
            30,
            &default_grid(),
        )
        .unwrap();
        assert!((fit.nbar - 3.7).abs() < 0.01, "{}", fit.nbar);
        assert!(fit.epsilon_min <= 1e-18);
    }

    #[test]
    fn parabola_recovers_exact_quadratic() {
        let f = |x: f64| 3.0 * (x - 1.23).powi(2) + 0.5;
        let pts = [1.1, 1.2, 1.3].map(|x| SweepPoint {
            nbar: x,
            epsilon: f(x),
        });
        assert_relative_eq!(
            parabola_vertex(pts[0], pts[1], pts[2]),
            1.23,
            epsilon = 1e-12
        );
        let flat = [1.0, 2.0, 3.0].map(|x| SweepPoint {
            nbar: x,
            epsilon: 1.0,
        });
        assert_eq!(parabola_vertex(flat[0], flat[1], flat[2]), 2.0);
    }

    #[test]
    fn simulated_signature_sweep_lands_near_truth() {
        let config = presets::calibrated_config(9);
        let run = simulate_run(
            &config,
            &SourceSpec::Coherent { nbar: 6.5 },
            150_000,
            &AfterpulseModel::none(),
            31,
        )
        .unwrap();
        let fit = fit_records(
            &run.records,
            &config,
            FitMethod::Signature,
            30,
            &default_grid(),
        )
        .unwrap();
        assert!((fit.nbar - 6.5).abs() < 0.2, "{}", fit.nbar);
    }

    #[test]
    fn free_form_recovers_two_photon_state() {
        let config = DetectorConfig::new(
            vec![0.2, 0.17, 0.15, 0.13, 0.11, 0.09, 0.07, 0.05],
            vec![0.1; 8],
            1e-3,
        )
        .unwrap();
        let k = 5;
        let truth = PhotonNumberDistribution::fock(2, k).unwrap();
        let observed = signature_distribution(&config, &truth).unwrap();
        let fit = free_form_fit(
            &observed,
            &config,
            k,
            &PhotonNumberDistribution::uniform(k),
            &FreeFormOptions::default(),
        )
        .unwrap();
        for (got, want) in fit.coefficients.coefficients.iter().zip(truth.probs()) {
            assert!((got - want).abs() < 1e-3, "{:?}", fit.coefficients);
        }
        assert!(fit.epsilon_min < 1e-10);
        assert!(fit.trace_deviation.abs() < 1e-5);
    }

    fn exact_free_form(truth: &PhotonNumberDistribution) -> FitResult {
        let config = presets::calibrated_config(9);
        let k = truth.truncation();
        let observed = signature_distribution(&config, truth).unwrap();
        free_form_fit(
            &observed,
            &config,
            k,
            &PhotonNumberDistribution::uniform(k),
            &FreeFormOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn free_form_coherent_mean() {
        let fit = exact_free_form(&PhotonNumberDistribution::coherent_truncated(4.0, 15).unwrap());
        assert!((fit.nbar - 4.0).abs() < 0.05, "{}", fit.nbar);
        assert!(fit.epsilon_min < 1e-10);
    }

    #[test]
    #[ignore = "ε is flat along directions the signatures cannot see; coefficients land ~0.3 off"]
    fn free_form_coherent_coefficients() {
        let truth = PhotonNumberDistribution::coherent_truncated(4.0, 15).unwrap();
        let fit = exact_free_form(&truth);
        for (got, want) in fit.coefficients.coefficients.iter().zip(truth.probs()) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn free_form_rejects_mismatched_inputs() {
        let config = presets::calibrated_config(9);
        let observed = SignatureDistribution {
            bins: 8,
            probs: vec![0.0; 256],
            provenance: Provenance::Predicted,
        };
        let init = PhotonNumberDistribution::uniform(4);
        assert!(free_form_fit(&observed, &config, 4, &init, &FreeFormOptions::default()).is_err());
        let observed = SignatureDistribution {
            bins: 9,
            probs: vec![0.0; 512],
            provenance: Provenance::Predicted,
        };
        assert!(free_form_fit(&observed, &config, 5, &init, &FreeFormOptions::default()).is_err());
    }

    #[test]
    fn vacuum_only_space_is_trivial() {
        let config = presets::calibrated_config(9);
        let observed =
            signature_distribution(&config, &PhotonNumberDistribution::fock(0, 0).unwrap())
                .unwrap();
        let fit = free_form_fit(
            &observed,
            &config,
            0,
            &PhotonNumberDistribution::uniform(0),
            &FreeFormOptions::default(),
        )
        .unwrap();
        assert!((fit.coefficients.coefficients[0] - 1.0).abs() < 1e-5);
        assert!(fit.physical);
        assert_eq!(fit.estimate.unwrap().probs(), &[1.0]);
    }

    proptest! {
        #[test]
        fn mse_is_a_symmetric_square_distance(
            pair in (1usize..20).prop_flat_map(|n| (
                prop::collection::vec(0.0f64..=1.0, n),
                prop::collection::vec(0.0f64..=1.0, n),
            ))
        ) {
            let (a, b) = pair;
            let ab = mse(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, mse(&b, &a).unwrap());
            prop_assert_eq!(mse(&a, &a).unwrap(), 0.0);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }

        #[test]
        fn noise_free_correction_only_touches_nothing(
            probs in prop::collection::vec(0.0f64..=1.0, 1..12)
        ) {
            let p = ClickProbabilities { probs: probs.clone(), sample_count: 1, clamped: false };
            prop_assert_eq!(afterpulse_correct(&p, 0.0, 0.0).probs, probs);
        }

        #[test]
        fn refined_minimum_stays_between_neighbours(nbar in 0.5f64..14.0) {
            let config = presets::calibrated_config(6);
            let state = PhotonNumberDistribution::coherent_truncated(nbar, 30).unwrap();
            let observed = signature_distribution(&config, &state).unwrap();
            let fit = poisson_sweep_fit(&observed.probs, SweepModel::Signature, &config, 30, &default_grid()).unwrap();
            let g = fit.grid_argmin.unwrap();
            prop_assert!(fit.nbar >= g - 0.1 - 1e-12 && fit.nbar <= g + 0.1 + 1e-12);
            prop_assert!((fit.nbar - nbar).abs() < 0.01);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn free_form_fits_exact_fock_data(n in 0usize..=5) {
            let fit = exact_free_form(&PhotonNumberDistribution::fock(n, 5).unwrap());
            prop_assert!(fit.epsilon_min < 1e-10, "{}", fit.epsilon_min);
            prop_assert!(fit.trace_deviation.abs() < 1e-5);
        }

        #[test]
        fn free_form_fits_exact_coherent_data(nbar in 0.5f64..8.0) {
            let fit = exact_free_form(&PhotonNumberDistribution::coherent_truncated(nbar, 15).unwrap());
            prop_assert!(fit.epsilon_min < 1e-10, "{}", fit.epsilon_min);
            prop_assert!(fit.trace_deviation.abs() < 1e-5);
        }
    }
}
