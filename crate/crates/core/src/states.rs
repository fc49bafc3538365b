//! Truncated photon-number distributions.
//!
//! A state is described by the diagonal of its density matrix in the Fock
//! basis, `ρ_nn` for `n = 0..=K`. Only diagonals are modelled; phases and
//! coherences never enter the detector statistics.
//!
//! The truncated coherent state is normalised over `i = 0..=K`. The printed
//! form of the renormalisation sum starts at `i = 1`, which drops the vacuum
//! term and leaves a trace different from one, so the vacuum term is kept.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Largest `n` whose factorial is evaluated as an exact product.
const EXACT_FACTORIAL_MAX: usize = 20;

/// Tolerance on `Σ ρ_nn = 1` accepted when validating a distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Natural logarithm of `n!`.
pub fn ln_factorial(n: usize) -> f64 {
    if n <= EXACT_FACTORIAL_MAX {
        (1..=n).map(|i| i as f64).product::<f64>().ln()
    } else {
        let head = ln_factorial(EXACT_FACTORIAL_MAX);
        head + ((EXACT_FACTORIAL_MAX + 1)..=n)
            .map(|i| (i as f64).ln())
            .sum::<f64>()
    }
}

/// Binomial coefficient `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// A normalised, non-negative photon-number distribution on `0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateFile", into = "StateFile")]
pub struct PhotonNumberDistribution {
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    #[serde(rename = "K")]
    k: usize,
    probs: Vec<f64>,
}

impl TryFrom<StateFile> for PhotonNumberDistribution {
    type Error = Error;

    fn try_from(file: StateFile) -> Result<Self> {
        if file.probs.len() != file.k + 1 {
            return domain(format!(
                "state has K = {} but {} coefficients",
                file.k,
                file.probs.len()
            ));
        }
        Self::new(file.probs)
    }
}

impl From<PhotonNumberDistribution> for StateFile {
    fn from(state: PhotonNumberDistribution) -> Self {
        StateFile {
            k: state.truncation(),
            probs: state.probs,
        }
    }
}

impl PhotonNumberDistribution {
    /// Wraps already-normalised probabilities, checking the invariants.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return domain("a distribution needs at least one coefficient");
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return domain(format!("invalid probability {p}"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return domain(format!("probabilities sum to {total}, not 1"));
        }
        Ok(Self { probs })
    }

    /// Poissonian statistics with mean `nbar`, truncated at `k` photons and
    /// renormalised to unit trace.
    pub fn coherent_truncated(nbar: f64, k: usize) -> Result<Self> {
        if !nbar.is_finite() || nbar < 0.0 {
            return domain(format!(
                "mean photon number must be finite and >= 0, got {nbar}"
            ));
        }
        if nbar == 0.0 {
            return Self::fock(0, k);
        }
        let ln_nbar = nbar.ln();
        let log_weights: Vec<f64> = (0..=k)
            .map(|n| n as f64 * ln_nbar - ln_factorial(n))
            .collect();
        let peak = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_weights.iter().map(|w| (w - peak).exp()).collect();
        let total: f64 = weights.iter().sum();
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// The number state `|n⟩` on a space truncated at `k`.
    pub fn fock(n: usize, k: usize) -> Result<Self> {
        if n > k {
            return domain(format!("Fock state |{n}> does not fit truncation K = {k}"));
        }
        let mut probs = vec![0.0; k + 1];
        probs[n] = 1.0;
        Ok(Self { probs })
    }

    /// Normalises arbitrary non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return domain("no weights given");
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return domain(format!("weights must be finite and >= 0, got {w}"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return domain("all weights are zero");
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// Uniform weight on `0..=k`.
    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![1.0 / (k + 1) as f64; k + 1],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Truncation photon number `K`.
    pub fn truncation(&self) -> usize {
        self.probs.len() - 1
    }

    /// `n̄ = Σ n ρ_nn`.
    pub fn mean_photon_number(&self) -> f64 {
        mean_of(&self.probs)
    }
}

fn mean_of(coeffs: &[f64]) -> f64 {
    coeffs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

/// Unconstrained diagonal coefficients, as produced mid-optimisation.
///
/// Nothing here is guaranteed: coefficients may be negative and the trace
/// may differ from one. Convert with [`RawDiagonal::to_distribution`] to get
/// a checked [`PhotonNumberDistribution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDiagonal {
    pub coefficients: Vec<f64>,
}

impl RawDiagonal {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn trace(&self) -> f64 {
        self.coefficients.iter().sum()
    }

    pub fn mean_photon_number(&self) -> f64 {
        mean_of(&self.coefficients)
    }

    /// Indices `n` with `ρ_nn < 0`.
    pub fn negative_indices(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| **c < 0.0)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn is_physical(&self) -> bool {
        self.coefficients.iter().all(|c| c.is_finite() && *c >= 0.0)
    }

    /// Renormalises to unit trace; fails when any coefficient is negative.
    pub fn to_distribution(&self) -> Result<PhotonNumberDistribution> {
        PhotonNumberDistribution::from_weights(&self.coefficients)
    }
}

impl From<&PhotonNumberDistribution> for RawDiagonal {
    fn from(state: &PhotonNumberDistribution) -> Self {
        Self::new(state.probs.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn vacuum_when_mean_is_zero() {
        let s = PhotonNumberDistribution::coherent_truncated(0.0, 4).unwrap();
        assert_eq!(s.probs(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_photon_truncation_splits_evenly() {
        let s = PhotonNumberDistribution::coherent_truncated(1.0, 1).unwrap();
        assert_relative_eq!(s.probs()[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.probs()[1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.mean_photon_number(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn wide_truncation_matches_untruncated_vacuum_weight() {
        // high-precision oracle: relative gap to e^{-8} is 5.37e-10
        let s = PhotonNumberDistribution::coherent_truncated(8.0, 30).unwrap();
        let exact = (-8.0f64).exp();
        assert!(((s.probs()[0] - exact) / exact).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_means() {
        assert!(PhotonNumberDistribution::coherent_truncated(-1.0, 3).is_err());
        assert!(PhotonNumberDistribution::coherent_truncated(f64::NAN, 3).is_err());
        assert!(PhotonNumberDistribution::coherent_truncated(f64::INFINITY, 3).is_err());
    }

    #[test]
    fn fock_states() {
        assert_eq!(
            PhotonNumberDistribution::fock(0, 2).unwrap().probs(),
            &[1.0, 0.0, 0.0]
        );
        assert_eq!(
            PhotonNumberDistribution::fock(2, 2).unwrap().probs(),
            &[0.0, 0.0, 1.0]
        );
        assert!(PhotonNumberDistribution::fock(3, 2).is_err());
        assert_eq!(
            PhotonNumberDistribution::fock(0, 2)
                .unwrap()
                .mean_photon_number(),
            0.0
        );
        assert_eq!(
            PhotonNumberDistribution::fock(2, 2)
                .unwrap()
                .mean_photon_number(),
            2.0
        );
    }

    #[test]
    fn weights_normalise() {
        let s = PhotonNumberDistribution::from_weights(&[2.0, 2.0]).unwrap();
        assert_eq!(s.probs(), &[0.5, 0.5]);
        let s = PhotonNumberDistribution::from_weights(&[0.0, 0.0, 5.0]).unwrap();
        assert_eq!(s.probs(), &[0.0, 0.0, 1.0]);
        let s = PhotonNumberDistribution::from_weights(&[1.0, 2.0, 1.0]).unwrap();
        assert_eq!(s.probs(), &[0.25, 0.5, 0.25]);
        assert!(PhotonNumberDistribution::from_weights(&[0.0, 0.0]).is_err());
        assert!(PhotonNumberDistribution::from_weights(&[1.0, -0.5]).is_err());
        assert!(PhotonNumberDistribution::from_weights(&[]).is_err());
    }

    #[test]
    fn factorials_stay_finite_past_twenty() {
        assert_relative_eq!(ln_factorial(5), 120f64.ln(), epsilon = 1e-14);
        // ln 40! = 110.3206397147574
        assert_relative_eq!(ln_factorial(40), 110.320_639_714_757_4, epsilon = 1e-10);
        let s = PhotonNumberDistribution::coherent_truncated(20.0, 40).unwrap();
        assert!(s.probs().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn binomial_coefficients() {
        assert_eq!(binomial(9, 5), 126.0);
        assert_eq!(binomial(4, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
    }

    #[test]
    fn json_shape() {
        let s = PhotonNumberDistribution::fock(1, 2).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"K":2,"probs":[0.0,1.0,0.0]}"#);
        let back: PhotonNumberDistribution = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(
            serde_json::from_str::<PhotonNumberDistribution>(r#"{"K":3,"probs":[1.0]}"#).is_err()
        );
        assert!(
            serde_json::from_str::<PhotonNumberDistribution>(r#"{"K":1,"probs":[0.7,0.7]}"#)
                .is_err()
        );
    }

    #[test]
    fn raw_diagonal_flags() {
        let raw = RawDiagonal::new(vec![0.6, -0.1, 0.6]);
        assert!(!raw.is_physical());
        assert_eq!(raw.negative_indices(), vec![1]);
        assert_relative_eq!(raw.trace(), 1.1, epsilon = 1e-15);
        assert!(raw.to_distribution().is_err());
    }

    proptest! {
        #[test]
        fn coherent_has_unit_trace(nbar in 0.0f64..=20.0, k in 1usize..=40) {
            let s = PhotonNumberDistribution::coherent_truncated(nbar, k).unwrap();
            let total: f64 = s.probs().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn truncation_preserves_ratios(nbar in 0.1f64..=20.0, k in 1usize..=30, extra in 1usize..=10) {
            let a = PhotonNumberDistribution::coherent_truncated(nbar, k).unwrap();
            let b = PhotonNumberDistribution::coherent_truncated(nbar, k + extra).unwrap();
            for n in 0..=k {
                let ra = a.probs()[n] / a.probs()[0];
                let rb = b.probs()[n] / b.probs()[0];
                prop_assert!((ra - rb).abs() <= 1e-11 * ra.abs().max(1.0));
            }
        }

        #[test]
        fn fock_mean_is_exact(k in 0usize..=40, n in 0usize..=40) {
            prop_assume!(n <= k);
            prop_assert_eq!(PhotonNumberDistribution::fock(n, k).unwrap().mean_photon_number(), n as f64);
        }
    }
}
