//! Forward models, Monte Carlo simulation and photostatistics reconstruction
//! for N-port detectors assembled from binary on/off photodetectors, with the
//! fibre-loop time-multiplexed detector as the worked case.
//!
//! The crate is organised bottom-up:
//!
//! * [`states`] builds truncated photon-number distributions.
//! * [`detector`] evaluates signature, click and conditional probabilities.
//! * [`simulator`] draws per-cycle detection records, including dark counts
//!   and regenerative afterpulsing.
//! * [`optim`] is a Nelder–Mead simplex minimiser.
//! * [`reconstruction`] turns records back into photon-number estimates.
//! * [`io`] holds the JSON and CSV file formats shared with the CLI.
//! * [`presets`] carries the calibrated 1550 nm loop detector parameters.

pub mod detector;
pub mod error;
pub mod io;
pub mod optim;
pub mod presets;
pub mod reconstruction;
pub mod simulator;
pub mod states;

pub use detector::{
    ConditionalMatrix, DetectorConfig, LoopGeometry, Signature, SignatureDistribution,
    SignatureResponse,
};
pub use error::{Error, Result};
pub use optim::{nelder_mead, OptimOptions, OptimReport};
pub use reconstruction::{ClickProbabilities, FitMode, FitResult, SweepModel};
pub use simulator::{AfterpulseModel, CycleRecord, RunResult, SourceSpec};
pub use states::{PhotonNumberDistribution, RawDiagonal};
