//! Monte Carlo generation of detection records.
//!
//! Per cycle: draw a photon number from the source, route every photon to a
//! port with one categorical draw (unassigned mass and the catch-all port are
//! never observed), detect it with probability `1 − p_loss`, add independent
//! dark counts, then sweep the bins in time order letting every click spawn an
//! afterpulse in the next bin with probability `p_a`. Afterpulses can
//! themselves afterpulse and stop at the last bin; nothing carries over to the
//! next cycle.
//!
//! Cycles are grouped in blocks of [`BLOCK_CYCLES`], each driven by its own
//! ChaCha stream keyed on the seed and block number. Results depend only on
//! the seed, never on how blocks are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorConfig, Provenance, Signature, SignatureDistribution};
use crate::error::{domain, Result};

pub const BLOCK_CYCLES: u64 = 4096;

/// Probability that a click in bin `i` produces a spurious click in bin `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfterpulseModel {
    pub probability: f64,
}

impl AfterpulseModel {
    pub fn new(probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return domain(format!(
                "afterpulse probability {probability} is not in [0, 1]"
            ));
        }
        Ok(Self { probability })
    }

    pub fn none() -> Self {
        Self { probability: 0.0 }
    }
}

/// Photon-number source feeding the detector once per cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SourceSpec {
    /// Poissonian photon numbers with the given mean.
    Coherent {
        nbar: f64,
    },
    Fock {
        n: usize,
    },
    /// Photon numbers taken in order, wrapping around.
    FixedSequence {
        photons: Vec<usize>,
    },
}

impl SourceSpec {
    fn validate(&self) -> Result<()> {
        match self {
            SourceSpec::Coherent { nbar } if !nbar.is_finite() || *nbar < 0.0 => domain(format!(
                "coherent source needs a finite mean >= 0, got {nbar}"
            )),
            SourceSpec::FixedSequence { photons } if photons.is_empty() => {
                domain("fixed photon sequence is empty")
            }
            _ => Ok(()),
        }
    }
}

enum PhotonDraw {
    Vacuum,
    Poisson(Poisson<f64>),
    Fixed(usize),
    Sequence(Vec<usize>),
}

impl PhotonDraw {
    fn new(source: &SourceSpec) -> Result<Self> {
        source.validate()?;
        Ok(match source {
            SourceSpec::Coherent { nbar } if *nbar == 0.0 => PhotonDraw::Vacuum,
            SourceSpec::Coherent { nbar } => PhotonDraw::Poisson(
                Poisson::new(*nbar).map_err(|e| crate::Error::Domain(e.to_string()))?,
            ),
            SourceSpec::Fock { n } => PhotonDraw::Fixed(*n),
            SourceSpec::FixedSequence { photons } => PhotonDraw::Sequence(photons.clone()),
        })
    }

    fn sample(&self, cycle: u64, rng: &mut impl Rng) -> usize {
        match self {
            PhotonDraw::Vacuum => 0,
            PhotonDraw::Poisson(p) => p.sample(rng) as usize,
            PhotonDraw::Fixed(n) => *n,
            PhotonDraw::Sequence(s) => s[(cycle % s.len() as u64) as usize],
        }
    }
}

/// One measurement cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub records: Vec<CycleRecord>,
    pub signature_counts: Vec<u64>,
    pub empirical_signature: SignatureDistribution,
    /// Fraction of cycles in which each bin clicked.
    pub empirical_clicks: Vec<f64>,
    pub seed: u64,
}

/// Simulates one cycle with exactly `photons` input photons.
pub fn simulate_cycle(
    config: &DetectorConfig,
    photons: usize,
    afterpulse: &AfterpulseModel,
    rng: &mut impl Rng,
) -> Signature {
    let bins = config.bins();
    let mut clicks = vec![false; bins];
    let coupling = &config.coupling()[..bins];
    let loss = config.loss();

    for _ in 0..photons {
        let u: f64 = rng.random();
        let mut edge = 0.0;
        let mut port = None;
        for (i, c) in coupling.iter().enumerate() {
            edge += c;
            if u < edge {
                port = Some(i);
                break;
            }
        }
        let detect: f64 = rng.random();
        if let Some(i) = port {
            if detect >= loss[i] {
                clicks[i] = true;
            }
        }
    }

    for click in clicks.iter_mut() {
        if rng.random::<f64>() < config.dark_count() {
            *click = true;
        }
    }

    // one draw per bin boundary whether or not it is used, so that click
    // sets grow monotonically with p_a for a fixed random stream
    for i in 0..bins.saturating_sub(1) {
        let u: f64 = rng.random();
        if clicks[i] && u < afterpulse.probability {
            clicks[i + 1] = true;
        }
    }

    Signature::from_bits(&clicks)
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Runs `cycles` measurement cycles. Identical arguments give identical results.
pub fn simulate_run(
    config: &DetectorConfig,
    source: &SourceSpec,
    cycles: u64,
    afterpulse: &AfterpulseModel,
    seed: u64,
) -> Result<RunResult> {
    if cycles == 0 {
        return domain("a run needs at least one cycle");
    }
    AfterpulseModel::new(afterpulse.probability)?;
    let draw = PhotonDraw::new(source)?;
    let mut records = Vec::with_capacity(cycles as usize);
    let blocks = cycles.div_ceil(BLOCK_CYCLES);
    for block in 0..blocks {
        let mut rng = block_rng(seed, block);
        let start = block * BLOCK_CYCLES;
        let end = (start + BLOCK_CYCLES).min(cycles);
        for cycle in start..end {
            let photons = draw.sample(cycle, &mut rng);
            let signature = simulate_cycle(config, photons, afterpulse, &mut rng);
            records.push(CycleRecord { cycle, signature });
        }
    }
    Ok(summarize(records, config.bins(), seed))
}

/// Builds the empirical distributions for a set of records.
pub fn summarize(records: Vec<CycleRecord>, bins: usize, seed: u64) -> RunResult {
    let mut signature_counts = vec![0u64; 1 << bins];
    let mut click_counts = vec![0u64; bins];
    for r in &records {
        signature_counts[r.signature.index() as usize] += 1;
        for (i, c) in click_counts.iter_mut().enumerate() {
            if r.signature.clicked(i) {
                *c += 1;
            }
        }
    }
    let total = records.len() as f64;
    RunResult {
        empirical_signature: SignatureDistribution {
            bins,
            probs: signature_counts.iter().map(|c| *c as f64 / total).collect(),
            provenance: Provenance::Empirical {
                sample_count: records.len() as u64,
            },
        },
        empirical_clicks: click_counts.iter().map(|c| *c as f64 / total).collect(),
        signature_counts,
        records,
        seed,
    }
}

/// Detector with the loop disconnected after the first pass.
pub fn open_loop_config(config: &DetectorConfig) -> DetectorConfig {
    config.open_loop()
}
