//! Exact forward model of an N-port detector built from on/off photodetectors.
//!
//! Each input photon leaves the multiplexer through port `i` with probability
//! `p_c(i)`. A photon reaching port `i` fails to trigger that port's detector
//! with probability `p_loss(i)`. Each detector also fires on its own with the
//! dark-count probability `p_dc`. Any coupling mass not assigned to a port
//! (`1 − Σ p_c`) is lost, which is the same as routing it to an unobserved
//! catch-all port.
//!
//! A [`Signature`] records which detectors fired in one cycle. Its integer
//! index puts bin 1 in the least-significant bit, so a click in bins 1 and 3
//! of a 9-bin detector is pattern `000000101`, index 5.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::states::{binomial, PhotonNumberDistribution};

/// Default ceiling on the bin count for full `2^N` signature sweeps.
pub const DEFAULT_SIGNATURE_CAP: usize = 16;

/// Largest number of compositions the brute-force oracle will enumerate.
pub const ENUMERATION_BUDGET: u64 = 5_000_000;

const SUM_TOLERANCE: f64 = 1e-12;

/// Converts an insertion loss in dB to a linear transmission.
pub fn db_to_transmission(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return domain(format!("{name} = {p} is not a probability"));
    }
    Ok(())
}

/// Coupling, loss and dark-count description of an N-port detector.
///
/// When a catch-all port is present it is stored as the last entry of the
/// coupling and loss vectors; [`DetectorConfig::bins`] still reports the
/// observable bin count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigFile", into = "ConfigFile")]
pub struct DetectorConfig {
    bins: usize,
    coupling: Vec<f64>,
    loss: Vec<f64>,
    dark_count: f64,
    catch_all: bool,
}

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    #[serde(rename = "N")]
    bins: usize,
    p_c: Vec<f64>,
    p_loss: Vec<f64>,
    p_dc: f64,
    #[serde(default)]
    catch_all: bool,
}

impl TryFrom<ConfigFile> for DetectorConfig {
    type Error = Error;

    fn try_from(f: ConfigFile) -> Result<Self> {
        let expected = f.bins + usize::from(f.catch_all);
        if f.p_c.len() != expected || f.p_loss.len() != expected {
            return domain(format!(
                "N = {} (catch_all = {}) needs {expected} entries in p_c and p_loss, got {} and {}",
                f.bins,
                f.catch_all,
                f.p_c.len(),
                f.p_loss.len()
            ));
        }
        Self::build(f.bins, f.p_c, f.p_loss, f.p_dc, f.catch_all)
    }
}

impl From<DetectorConfig> for ConfigFile {
    fn from(c: DetectorConfig) -> Self {
        ConfigFile {
            bins: c.bins,
            p_c: c.coupling,
            p_loss: c.loss,
            p_dc: c.dark_count,
            catch_all: c.catch_all,
        }
    }
}

impl DetectorConfig {
    /// A detector with one entry per observable bin and no catch-all port.
    pub fn new(coupling: Vec<f64>, loss: Vec<f64>, dark_count: f64) -> Result<Self> {
        if coupling.len() != loss.len() {
            return domain(format!(
                "p_c has {} entries but p_loss has {}",
                coupling.len(),
                loss.len()
            ));
        }
        let bins = coupling.len();
        Self::build(bins, coupling, loss, dark_count, false)
    }

    fn build(
        bins: usize,
        coupling: Vec<f64>,
        loss: Vec<f64>,
        dark_count: f64,
        catch_all: bool,
    ) -> Result<Self> {
        if bins == 0 {
            return domain("a detector needs at least one bin");
        }
        if bins > 63 {
            return domain(format!("{bins} bins do not fit a 64-bit signature index"));
        }
        for (i, (&c, &l)) in coupling.iter().zip(&loss).enumerate() {
            check_probability(&format!("p_c({})", i + 1), c)?;
            check_probability(&format!("p_loss({})", i + 1), l)?;
        }
        check_probability("p_dc", dark_count)?;
        let total: f64 = coupling.iter().sum();
        if total > 1.0 + SUM_TOLERANCE {
            return domain(format!("coupling probabilities sum to {total} > 1"));
        }
        if catch_all {
            if (total - 1.0).abs() > SUM_TOLERANCE {
                return domain(format!(
                    "with a catch-all bin the coupling must sum to 1, got {total}"
                ));
            }
            if loss[bins] != 0.0 {
                return domain("the catch-all bin must have p_loss = 0");
            }
        }
        Ok(Self {
            bins,
            coupling,
            loss,
            dark_count,
            catch_all,
        })
    }

    /// Number of observable bins `N`.
    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Coupling probabilities, including the catch-all entry when present.
    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    pub fn loss(&self) -> &[f64] {
        &self.loss
    }

    pub fn dark_count(&self) -> f64 {
        self.dark_count
    }

    pub fn has_catch_all(&self) -> bool {
        self.catch_all
    }

    /// Total detection efficiency `p_c(i)·(1 − p_loss(i))` of each observable bin.
    pub fn bin_efficiencies(&self) -> Vec<f64> {
        (0..self.bins)
            .map(|i| self.coupling[i] * (1.0 - self.loss[i]))
            .collect()
    }

    /// Copy with a different dark-count probability.
    pub fn with_dark_count(&self, dark_count: f64) -> Result<Self> {
        check_probability("p_dc", dark_count)?;
        Ok(Self {
            dark_count,
            ..self.clone()
        })
    }

    /// Adds an unobserved port that absorbs the coupling mass not assigned to
    /// any observable bin. A config that already has one is returned as is.
    pub fn with_catch_all(&self) -> Self {
        if self.catch_all {
            return self.clone();
        }
        let assigned: f64 = self.coupling.iter().sum();
        let mut coupling = self.coupling.clone();
        let mut loss = self.loss.clone();
        coupling.push((1.0 - assigned).max(0.0));
        loss.push(0.0);
        Self {
            bins: self.bins,
            coupling,
            loss,
            dark_count: self.dark_count,
            catch_all: true,
        }
    }

    /// Opens the loop: only bin 1 receives light, later bins see dark counts
    /// and afterpulses alone.
    pub fn open_loop(&self) -> Self {
        let mut out = self.clone();
        for c in out.coupling.iter_mut().take(self.bins).skip(1) {
            *c = 0.0;
        }
        if out.catch_all {
            out.coupling[self.bins] = 1.0 - out.coupling[0];
        }
        out
    }

    /// Rearranges the observable bins so that new bin `j` is old bin `order[j]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.bins];
        if order.len() != self.bins {
            return domain("permutation length differs from the bin count");
        }
        for &o in order {
            if o >= self.bins || std::mem::replace(&mut seen[o], true) {
                return domain("not a permutation of the bins");
            }
        }
        let mut coupling: Vec<f64> = order.iter().map(|&o| self.coupling[o]).collect();
        let mut loss: Vec<f64> = order.iter().map(|&o| self.loss[o]).collect();
        if self.catch_all {
            coupling.push(self.coupling[self.bins]);
            loss.push(self.loss[self.bins]);
        }
        Self::build(self.bins, coupling, loss, self.dark_count, self.catch_all)
    }
}

/// Physical parameters of a fibre-loop time-multiplexed detector.
///
/// The pulse enters through the switch and meets the tap coupler, which sends
/// a fraction `tap_ratio` to the on/off detector on every pass. The remainder
/// circulates through the fibre, back through the switch and onto the coupler
/// again.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopGeometry {
    pub tap_ratio: f64,
    pub switch_transmission: f64,
    pub fiber_transmission: f64,
    pub coupler_transmission: f64,
    pub detector_efficiency: f64,
    pub bins: usize,
}

impl LoopGeometry {
    /// Builds a geometry from insertion losses quoted in dB.
    pub fn from_losses_db(
        tap_ratio: f64,
        switch_db: f64,
        fiber_db: f64,
        coupler_db: f64,
        detector_efficiency: f64,
        bins: usize,
    ) -> Self {
        Self {
            tap_ratio,
            switch_transmission: db_to_transmission(switch_db),
            fiber_transmission: db_to_transmission(fiber_db),
            coupler_transmission: db_to_transmission(coupler_db),
            detector_efficiency,
            bins,
        }
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("tap_ratio", self.tap_ratio),
            ("switch_transmission", self.switch_transmission),
            ("fiber_transmission", self.fiber_transmission),
            ("coupler_transmission", self.coupler_transmission),
            ("detector_efficiency", self.detector_efficiency),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v <= 1.0) {
                return domain(format!("{name} = {v} must lie in (0, 1]"));
            }
        }
        if self.bins == 0 {
            return domain("a loop detector needs at least one bin");
        }
        Ok(())
    }

    /// Fraction of the circulating light that survives one more round trip
    /// and reaches the coupler again.
    pub fn round_trip_factor(&self) -> f64 {
        (1.0 - self.tap_ratio)
            * self.fiber_transmission
            * self.coupler_transmission
            * self.switch_transmission
    }

    /// Coupling probability into the first bin.
    pub fn first_bin_coupling(&self) -> f64 {
        self.switch_transmission * self.coupler_transmission * self.tap_ratio
    }
}

/// Translates a loop geometry into per-bin coupling and loss.
pub fn loop_config(geometry: &LoopGeometry, dark_count: f64) -> Result<DetectorConfig> {
    geometry.validate()?;
    let first = geometry.first_bin_coupling();
    let step = geometry.round_trip_factor();
    let coupling: Vec<f64> = (0..geometry.bins)
        .scan(first, |c, _| {
            let out = *c;
            *c *= step;
            Some(out)
        })
        .collect();
    let loss = vec![1.0 - geometry.detector_efficiency; geometry.bins];
    DetectorConfig::new(coupling, loss, dark_count)
}

/// Detector quantum efficiency assumed when splitting bin efficiencies.
pub const DEFAULT_DETECTOR_EFFICIENCY: f64 = 0.1;

/// Builds a config from calibrated per-bin detection efficiencies, with the
/// default detector quantum efficiency of 10 %.
pub fn config_from_bin_efficiencies(etas: &[f64], dark_count: f64) -> Result<DetectorConfig> {
    config_from_bin_efficiencies_with(etas, dark_count, DEFAULT_DETECTOR_EFFICIENCY)
}

/// Only the product `p_c(i)·(1 − p_loss(i))` is fixed by a bin efficiency.
/// The detector quantum efficiency goes into `p_loss` and all transport loss
/// into `p_c`.
pub fn config_from_bin_efficiencies_with(
    etas: &[f64],
    dark_count: f64,
    detector_efficiency: f64,
) -> Result<DetectorConfig> {
    if !(detector_efficiency > 0.0 && detector_efficiency <= 1.0) {
        return domain(format!(
            "detector efficiency {detector_efficiency} must lie in (0, 1]"
        ));
    }
    if let Some(eta) = etas.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return domain(format!("bin efficiency {eta} must lie in (0, 1]"));
    }
    let coupling: Vec<f64> = etas.iter().map(|e| e / detector_efficiency).collect();
    let loss = vec![1.0 - detector_efficiency; etas.len()];
    DetectorConfig::new(coupling, loss, dark_count)
}

/// Which of the `N` bins clicked during one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Signature {
    index: u64,
    bins: usize,
}

impl Signature {
    /// From a bit vector, `bits[0]` being bin 1.
    pub fn from_bits(bits: &[bool]) -> Self {
        let index = bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .fold(0u64, |acc, (i, _)| acc | (1 << i));
        Self {
            index,
            bins: bits.len(),
        }
    }

    pub fn from_index(index: u64, bins: usize) -> Result<Self> {
        if bins > 63 || index >> bins != 0 {
            return domain(format!("index {index} does not fit {bins} bins"));
        }
        Ok(Self { index, bins })
    }

    /// Signature with the given (zero-based) bins set.
    pub fn from_clicks(clicked: &[usize], bins: usize) -> Result<Self> {
        let mut index = 0u64;
        for &i in clicked {
            if i >= bins {
                return domain(format!("bin {} out of range for N = {bins}", i + 1));
            }
            index |= 1 << i;
        }
        Ok(Self { index, bins })
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Whether zero-based bin `i` clicked.
    pub fn clicked(&self, i: usize) -> bool {
        self.index >> i & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.bins).map(|i| self.clicked(i)).collect()
    }

    /// Number of clicks `|d|`.
    pub fn clicks(&self) -> usize {
        self.index.count_ones() as usize
    }

    /// Binary pattern with bin 1 as the rightmost character.
    pub fn pattern(&self) -> String {
        (0..self.bins)
            .rev()
            .map(|i| if self.clicked(i) { '1' } else { '0' })
            .collect()
    }
}

/// Whether a signature distribution came from the model or from counting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Predicted,
    Empirical { sample_count: u64 },
}

/// Probabilities of all `2^N` signatures, in index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureDistribution {
    pub bins: usize,
    pub probs: Vec<f64>,
    pub provenance: Provenance,
}

impl SignatureDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability that bin `i` (zero-based) clicked, summed over signatures.
    pub fn bin_marginal(&self, i: usize) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(d, _)| d >> i & 1 == 1)
            .map(|(_, p)| p)
            .sum()
    }

    /// CSV with columns `index,pattern,probability`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,pattern,probability\n");
        for (d, p) in self.probs.iter().enumerate() {
            let sig = Signature {
                index: d as u64,
                bins: self.bins,
            };
            out.push_str(&format!("{d},{},{p:e}\n", sig.pattern()));
        }
        out
    }
}

/// `P(m|n)`: probability of `m` clicks given `n` input photons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMatrix {
    pub bins: usize,
    pub n_max: usize,
    /// `entries[m][n]`
    pub entries: Vec<Vec<f64>>,
}

impl ConditionalMatrix {
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.entries[m][n]
    }

    pub fn column_sum(&self, n: usize) -> f64 {
        self.entries.iter().map(|row| row[n]).sum()
    }

    /// CSV with one row per click count and one column per photon number.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m");
        for n in 0..=self.n_max {
            out.push_str(&format!(",n={n}"));
        }
        out.push('\n');
        for (m, row) in self.entries.iter().enumerate() {
            out.push_str(&m.to_string());
            for p in row {
                out.push_str(&format!(",{p:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Inclusion–exclusion terms `(coefficient, base)` for one signature, such
/// that `P(d|n) = Σ coefficient · baseⁿ`.
///
/// Expanding the clicked-bin factors `1 − (1 − p_dc)·p_loss^{n_j}` over
/// subsets `S` of the clicked bins and summing the multinomial gives
/// `Σ_S (−1)^{|S|} (1 − p_dc)^{|S| + N − |d|} (1 − Σ_{S ∪ silent} η_i)^n`.
fn inclusion_exclusion_terms(efficiencies: &[f64], keep: f64, mask: u64) -> Vec<(f64, f64)> {
    let bins = efficiencies.len();
    let full = if bins == 64 {
        u64::MAX
    } else {
        (1u64 << bins) - 1
    };
    let silent = full & !mask;
    let silent_count = silent.count_ones() as i32;
    let mut terms = Vec::with_capacity(1 << mask.count_ones());
    // submasks of `mask`, from the empty set upward in a fixed order
    let mut sub = 0u64;
    loop {
        let size = sub.count_ones() as i32;
        let dark = silent | sub;
        let mut removed = 0.0;
        for (i, eta) in efficiencies.iter().enumerate() {
            if dark >> i & 1 == 1 {
                removed += eta;
            }
        }
        let sign = if size % 2 == 0 { 1.0 } else { -1.0 };
        terms.push((sign * keep.powi(size + silent_count), 1.0 - removed));
        if sub == mask {
            break;
        }
        sub = (sub.wrapping_sub(mask)) & mask;
    }
    terms
}

fn check_signature(config: &DetectorConfig, d: &Signature) -> Result<()> {
    if d.bins != config.bins {
        return domain(format!(
            "signature has {} bins but the detector has {}",
            d.bins, config.bins
        ));
    }
    Ok(())
}

/// `P_sig(d|n)` by the inclusion–exclusion closed form, `O(2^{|d|})` terms.
pub fn signature_prob_given_n(config: &DetectorConfig, d: &Signature, n: usize) -> Result<f64> {
    check_signature(config, d)?;
    let terms =
        inclusion_exclusion_terms(&config.bin_efficiencies(), 1.0 - config.dark_count, d.index);
    Ok(terms.iter().map(|(c, w)| c * w.powi(n as i32)).sum())
}

/// Number of ways to write `n` as an ordered sum of `parts` non-negative integers.
fn composition_count(n: usize, parts: usize) -> f64 {
    if parts == 0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    binomial(n + parts - 1, parts - 1)
}

/// `P_sig(d|n)` by direct enumeration of every photon allocation
/// `n_1 + … + n_B = n`, weighting each by its multinomial probability.
///
/// Unassigned coupling mass is enumerated as an extra port whose photons
/// never reach a detector. A catch-all port is marginalised by adding its
/// "silent" and "clicked" outcomes. Intended as a small-instance oracle;
/// fails with [`Error::Capacity`] beyond [`ENUMERATION_BUDGET`] compositions.
pub fn signature_prob_given_n_bruteforce(
    config: &DetectorConfig,
    d: &Signature,
    n: usize,
) -> Result<f64> {
    check_signature(config, d)?;
    let mut coupling = config.coupling.clone();
    let mut loss = config.loss.clone();
    let mut hidden = Vec::new();
    if config.catch_all {
        hidden.push(config.bins);
    } else {
        let assigned: f64 = coupling.iter().sum();
        if assigned < 1.0 {
            coupling.push(1.0 - assigned);
            loss.push(1.0);
            hidden.push(coupling.len() - 1);
        }
    }
    let parts = coupling.len();
    let count = composition_count(n, parts);
    if count > ENUMERATION_BUDGET as f64 {
        return Err(Error::Capacity(format!(
            "{count:.0} compositions of {n} photons over {parts} ports exceed the \
             enumeration budget; use signature_prob_given_n"
        )));
    }

    let ln_n_fact = crate::states::ln_factorial(n);
    let p_dc = config.dark_count;
    let mut allocation = vec![0usize; parts];
    let mut total = 0.0;
    enumerate_compositions(n, 0, &mut allocation, &mut |alloc| {
        let mut ln_weight = ln_n_fact;
        for (&k, &c) in alloc.iter().zip(&coupling) {
            if k > 0 {
                if c == 0.0 {
                    return;
                }
                ln_weight += k as f64 * c.ln() - crate::states::ln_factorial(k);
            }
        }
        let mut factor = 1.0;
        for (i, &k) in alloc.iter().enumerate().take(config.bins) {
            let all_lost = loss[i].powi(k as i32);
            factor *= if d.clicked(i) {
                p_dc + (1.0 - p_dc) * (1.0 - all_lost)
            } else {
                (1.0 - p_dc) * all_lost
            };
        }
        for &h in &hidden {
            let all_lost = loss[h].powi(alloc[h] as i32);
            if config.catch_all {
                let silent = (1.0 - p_dc) * all_lost;
                let clicked = p_dc + (1.0 - p_dc) * (1.0 - all_lost);
                factor *= silent + clicked;
            }
        }
        total += ln_weight.exp() * factor;
    });
    Ok(total)
}

fn enumerate_compositions(
    remaining: usize,
    slot: usize,
    alloc: &mut [usize],
    visit: &mut impl FnMut(&[usize]),
) {
    if slot + 1 == alloc.len() {
        alloc[slot] = remaining;
        visit(alloc);
        return;
    }
    for k in 0..=remaining {
        alloc[slot] = k;
        enumerate_compositions(remaining - k, slot + 1, alloc, visit);
    }
}

fn pascal_rows(n_max: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut row = vec![1.0; n + 1];
        for k in 1..n {
            row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
        }
        rows.push(row);
    }
    rows
}

fn powers(base: f64, n_max: usize) -> Vec<f64> {
    std::iter::successors(Some(1.0), |p| Some(p * base))
        .take(n_max + 1)
        .collect()
}

/// Builds the response table from sums of non-negative terms.
///
/// Each photon independently ends up detected in bin `i` (probability `η_i`)
/// or undetected. For a fixed signature, bins are folded in one at a time
/// with a binomial convolution over photon counts: a silent bin takes no
/// detected photon and no dark count, a clicked bin takes either at least
/// one photon or none plus a dark count. The undetected share is folded in
/// last. Nothing cancels, so tiny probabilities keep their relative accuracy,
/// which the alternating inclusion–exclusion sum does not.
struct ResponseFill<'a> {
    efficiencies: &'a [f64],
    dark_count: f64,
    pascal: Vec<Vec<f64>>,
    undetected_powers: Vec<f64>,
    width: usize,
    table: &'a mut [f64],
}

impl ResponseFill<'_> {
    fn descend(&mut self, bin: usize, mask: usize, poly: Vec<f64>) {
        if bin == self.efficiencies.len() {
            let row = &mut self.table[mask * self.width..(mask + 1) * self.width];
            for (n, cell) in row.iter_mut().enumerate() {
                *cell = (0..=n)
                    .map(|m| self.pascal[n][m] * poly[m] * self.undetected_powers[n - m])
                    .sum();
            }
            return;
        }
        let keep = 1.0 - self.dark_count;
        let silent: Vec<f64> = poly.iter().map(|p| p * keep).collect();
        self.descend(bin + 1, mask, silent);

        let eta = self.efficiencies[bin];
        let click = powers(eta, self.width - 1);
        let clicked: Vec<f64> = (0..self.width)
            .map(|n| {
                let photons: f64 = (1..=n)
                    .map(|k| self.pascal[n][k] * click[k] * poly[n - k])
                    .sum();
                photons + self.dark_count * poly[n]
            })
            .collect();
        self.descend(bin + 1, mask | 1 << bin, clicked);
    }
}

/// Precomputed `P_sig(d|n)` for every signature `d` and `n = 0..=n_max`.
///
/// Predictions for any state on the same truncation are then a single
/// matrix–vector product, which is what the sweep and simplex fits need.
#[derive(Debug, Clone)]
pub struct SignatureResponse {
    bins: usize,
    n_max: usize,
    /// row-major `[d][n]`
    table: Vec<f64>,
}

impl SignatureResponse {
    pub fn new(config: &DetectorConfig, n_max: usize) -> Result<Self> {
        Self::with_cap(config, n_max, DEFAULT_SIGNATURE_CAP)
    }

    pub fn with_cap(config: &DetectorConfig, n_max: usize, cap: usize) -> Result<Self> {
        let bins = config.bins;
        if bins > cap {
            return Err(Error::Capacity(format!(
                "{bins} bins give 2^{bins} signatures, above the cap of 2^{cap}"
            )));
        }
        let efficiencies = config.bin_efficiencies();
        let width = n_max + 1;
        let mut table = vec![0.0; (1usize << bins) * width];
        let undetected = 1.0 - efficiencies.iter().sum::<f64>();
        let mut fill = ResponseFill {
            efficiencies: &efficiencies,
            dark_count: config.dark_count,
            pascal: pascal_rows(n_max),
            undetected_powers: powers(undetected.max(0.0), n_max),
            width,
            table: &mut table,
        };
        let mut start = vec![0.0; width];
        start[0] = 1.0;
        fill.descend(0, 0, start);
        Ok(Self { bins, n_max, table })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn signature_count(&self) -> usize {
        1 << self.bins
    }

    /// `P_sig(d|n)`.
    pub fn get(&self, d: usize, n: usize) -> f64 {
        self.table[d * (self.n_max + 1) + n]
    }

    /// `Σ_n ρ_nn P_sig(d|n)` for every `d`. The coefficients need not be
    /// normalised or positive; missing high-`n` entries count as zero.
    pub fn predict(&self, coefficients: &[f64]) -> Vec<f64> {
        let width = self.n_max + 1;
        let used = coefficients.len().min(width);
        self.table
            .chunks_exact(width)
            .map(|row| {
                row[..used]
                    .iter()
                    .zip(&coefficients[..used])
                    .map(|(p, c)| p * c)
                    .sum()
            })
            .collect()
    }

    /// Signature distribution for a state whose truncation is at most `n_max`.
    pub fn distribution(&self, state: &PhotonNumberDistribution) -> Result<SignatureDistribution> {
        if state.truncation() > self.n_max {
            return domain(format!(
                "state truncation {} exceeds the response table's n_max {}",
                state.truncation(),
                self.n_max
            ));
        }
        // rounding can leave a near-certain signature a few ulps above 1
        let probs = self
            .predict(state.probs())
            .into_iter()
            .map(|p| p.clamp(0.0, 1.0))
            .collect();
        Ok(SignatureDistribution {
            bins: self.bins,
            probs,
            provenance: Provenance::Predicted,
        })
    }

    /// Groups signatures by click count.
    pub fn conditional_matrix(&self) -> ConditionalMatrix {
        let mut entries = vec![vec![0.0; self.n_max + 1]; self.bins + 1];
        for d in 0..self.signature_count() {
            let m = d.count_ones() as usize;
            for (n, entry) in entries[m].iter_mut().enumerate() {
                *entry += self.get(d, n);
            }
        }
        ConditionalMatrix {
            bins: self.bins,
            n_max: self.n_max,
            entries,
        }
    }
}

/// `p_sig(d, ρ) = Σ_n ρ_nn P_sig(d|n)`.
pub fn signature_prob_state(
    config: &DetectorConfig,
    d: &Signature,
    state: &PhotonNumberDistribution,
) -> Result<f64> {
    check_signature(config, d)?;
    let terms =
        inclusion_exclusion_terms(&config.bin_efficiencies(), 1.0 - config.dark_count, d.index);
    Ok(state
        .probs()
        .iter()
        .enumerate()
        .map(|(n, rho)| rho * terms.iter().map(|(c, w)| c * w.powi(n as i32)).sum::<f64>())
        .sum())
}

/// Predicted probabilities of all `2^N` signatures for `state`.
pub fn signature_distribution(
    config: &DetectorConfig,
    state: &PhotonNumberDistribution,
) -> Result<SignatureDistribution> {
    SignatureResponse::new(config, state.truncation())?.distribution(state)
}

/// `P(m|n)` for `m = 0..=N` and `n = 0..=n_max`.
pub fn conditional_matrix(config: &DetectorConfig, n_max: usize) -> Result<ConditionalMatrix> {
    Ok(SignatureResponse::new(config, n_max)?.conditional_matrix())
}

/// Click probability of a single on/off detector of efficiency `eta`:
/// `p_dc + (1 − p_dc) Σ_{n≥1} Σ_{j≥n} C(j, n) ηⁿ (1 − η)^{j−n} ρ_jj`.
pub fn click_prob_binomial(eta: f64, state: &PhotonNumberDistribution, dark_count: f64) -> f64 {
    click_prob_binomial_raw(eta, state.probs(), dark_count)
}

/// As [`click_prob_binomial`], over unconstrained coefficients.
pub fn click_prob_binomial_raw(eta: f64, coefficients: &[f64], dark_count: f64) -> f64 {
    let k = coefficients.len().saturating_sub(1);
    let mut detected = 0.0;
    for n in 1..=k {
        for (j, rho) in coefficients.iter().enumerate().skip(n) {
            detected +=
                binomial(j, n) * eta.powi(n as i32) * (1.0 - eta).powi((j - n) as i32) * rho;
        }
    }
    dark_count + (1.0 - dark_count) * detected
}
