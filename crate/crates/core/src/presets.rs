//! Calibrated parameters of the 1550 nm fibre-loop detector: a 2 km loop,
//! a 10 % tap coupler and an InGaAs on/off detector gated at 100 kHz.

use crate::detector::{config_from_bin_efficiencies, DetectorConfig, LoopGeometry};

/// Total detection efficiency of each time bin, bin 1 first.
pub const BIN_EFFICIENCIES: [f64; 14] = [
    6.83e-3, 3.58e-3, 1.88e-3, 9.91e-4, 5.22e-4, 2.75e-4, 1.45e-4, 7.61e-5, 4.01e-5, 2.11e-5,
    1.11e-5, 5.84e-6, 3.08e-6, 1.62e-6,
];

/// Dark-count probability per gate at 10 % detector efficiency.
pub const DARK_COUNT: f64 = 9.6e-4;

/// Dark-count probability per gate at 25 % detector efficiency.
pub const DARK_COUNT_HIGH_EFFICIENCY: f64 = 2.75e-2;

pub const DETECTOR_EFFICIENCY: f64 = 0.1;

/// Afterpulse probability measured at 10 % detector efficiency.
pub const AFTERPULSE: f64 = 0.03;

pub const TAP_RATIO: f64 = 0.1;
pub const SWITCH_LOSS_DB: f64 = 1.2;
pub const FIBER_LOSS_DB: f64 = 0.8;
pub const COUPLER_LOSS_DB: f64 = 0.5;

/// Number of bins retained in the analysis.
pub const ANALYSED_BINS: usize = 9;

/// Loop geometry with the quoted component losses.
pub fn loop_geometry(bins: usize) -> LoopGeometry {
    LoopGeometry::from_losses_db(
        TAP_RATIO,
        SWITCH_LOSS_DB,
        FIBER_LOSS_DB,
        COUPLER_LOSS_DB,
        DETECTOR_EFFICIENCY,
        bins,
    )
}

/// Calibrated per-bin efficiencies for the first `bins` bins plus a
/// catch-all port, at the 10 % operating point.
///
/// # Panics
///
/// If `bins` is zero or exceeds the 14 calibrated bins.
pub fn calibrated_config(bins: usize) -> DetectorConfig {
    assert!((1..=BIN_EFFICIENCIES.len()).contains(&bins));
    config_from_bin_efficiencies(&BIN_EFFICIENCIES[..bins], DARK_COUNT)
        .expect("calibrated efficiencies are valid")
        .with_catch_all()
}
