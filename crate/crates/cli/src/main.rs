//! `loopsig`: characterise loop detectors, simulate detection records and fit
//! photon-number statistics to them.
//!
//! Exit codes: 0 on success (a free-form fit that did not converge still
//! counts), 2 for invalid input, 3 for I/O failures.

mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use loopsig::detector::conditional_matrix;
use loopsig::io::{self, RecordSidecar};
use loopsig::optim::OptimOptions;
use loopsig::presets;
use loopsig::reconstruction::{
    estimate_signature_probs, fit_records, free_form_fit, nbar_grid, FitMethod, FitMode,
    FreeFormOptions,
};
use loopsig::simulator::{simulate_run, AfterpulseModel, CycleRecord, SourceSpec};
use loopsig::{DetectorConfig, Error, PhotonNumberDistribution};

use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "loopsig",
    version,
    about = "Photon-number statistics from on/off detector signatures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write P(m|n) and the per-bin efficiency table for a detector.
    Characterize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        n_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate detection records for a photon source.
    Simulate(SimulateArgs),
    /// Fit a coherent state by sweeping its mean photon number.
    Fit {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Signature)]
        method: Method,
        /// Afterpulse probability used by binomial-corrected.
        #[arg(long, default_value_t = presets::AFTERPULSE)]
        p_a: f64,
        #[arg(long, default_value_t = 30)]
        k: usize,
        #[arg(long, default_value = "0:15:151")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Free-form reconstruction of the photon-number distribution.
    Reconstruct {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Mode::PaperFaithful)]
        mode: Mode,
        /// Starting distribution as a state JSON file. Uniform if omitted.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = OptimOptions::default().max_iterations)]
        max_iterations: usize,
        #[arg(long, default_value_t = OptimOptions::default().restart_count)]
        restarts: usize,
        #[arg(long, default_value_t = 1.0)]
        trace_weight: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count signatures in a record file, most frequent first.
    SignatureStats {
        #[arg(long)]
        records: PathBuf,
        /// Keep only the most frequent rows.
        #[arg(long)]
        top_k: Option<usize>,
        /// Bin count when the records have no sidecar.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Mean photon number of a coherent source.
    #[arg(long, conflicts_with = "fock", required_unless_present = "fock")]
    nbar: Option<f64>,
    /// Photon number of a Fock source.
    #[arg(long)]
    fock: Option<usize>,
    #[arg(long, default_value_t = 150_000)]
    cycles: u64,
    #[arg(long, default_value_t = 0.0)]
    p_a: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Binomial,
    BinomialCorrected,
    Signature,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PaperFaithful,
    Physical,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Io(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Characterize { config, n_max, out } => characterize(&config, n_max, &out),
        Command::Simulate(args) => simulate(&args),
        Command::Fit {
            records,
            config,
            method,
            p_a,
            k,
            grid,
            out,
        } => fit(&records, &config, method, p_a, k, &grid, &out),
        Command::Reconstruct {
            records,
            config,
            k,
            mode,
            init,
            max_iterations,
            restarts,
            trace_weight,
            out,
        } => {
            let options = FreeFormOptions {
                mode: match mode {
                    Mode::PaperFaithful => FitMode::PaperFaithful,
                    Mode::Physical => FitMode::Physical,
                },
                trace_weight,
                optim: OptimOptions {
                    max_iterations,
                    restart_count: restarts,
                    ..OptimOptions::default()
                },
            };
            reconstruct(&records, &config, k, init.as_deref(), &options, &out)
        }
        Command::SignatureStats {
            records,
            top_k,
            bins,
            out,
        } => signature_stats(&records, top_k, bins, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn prepare_out(out: &Path) -> CmdResult {
    fs::create_dir_all(out)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", out.display())))
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents)
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn read_config(path: &Path) -> Result<DetectorConfig, Failure> {
    io::read_config(path).map_err(Failure::from)
}

/// Records plus their sidecar, checked against the detector's bin count.
fn read_records_for(path: &Path, config: &DetectorConfig) -> Result<Vec<CycleRecord>, Failure> {
    if let Some(sidecar) = io::read_sidecar(path)? {
        if sidecar.bins() != config.bins() {
            return Err(Failure::Input(format!(
                "records were taken with N = {}, the config has N = {}",
                sidecar.bins(),
                config.bins()
            )));
        }
    }
    let records = io::read_records(path, config.bins())?;
    if records.is_empty() {
        return Err(Failure::Input(format!(
            "{} holds no records",
            path.display()
        )));
    }
    Ok(records)
}

fn characterize(config_path: &Path, n_max: usize, out: &Path) -> CmdResult {
    let mut manifest = RunManifest::start("characterize");
    let config = read_config(config_path)?;
    manifest.config(config_path)?;
    let matrix = conditional_matrix(&config, n_max)?;
    prepare_out(out)?;

    let mut table = String::from("bin,p_c,p_loss,eta\n");
    for (i, eta) in config.bin_efficiencies().iter().enumerate() {
        let _ = writeln!(
            table,
            "{},{:e},{:e},{:e}",
            i + 1,
            config.coupling()[i],
            config.loss()[i],
            eta
        );
    }
    let matrix_path = out.join("conditional_matrix.csv");
    let table_path = out.join("bin_efficiencies.csv");
    write_file(&matrix_path, &matrix.to_csv())?;
    write_file(&table_path, &table)?;
    manifest
        .output(&matrix_path)
        .output(&table_path)
        .finish(out)
}

fn simulate(args: &SimulateArgs) -> CmdResult {
    let mut manifest = RunManifest::start("simulate");
    let config = read_config(&args.config)?;
    manifest.config(&args.config)?.seed(args.seed);
    let source = match (args.nbar, args.fock) {
        (Some(nbar), _) => SourceSpec::Coherent { nbar },
        (None, Some(n)) => SourceSpec::Fock { n },
        (None, None) => return Err(Failure::Input("give --nbar or --fock".into())),
    };
    let afterpulse = AfterpulseModel::new(args.p_a)?;
    let run = simulate_run(&config, &source, args.cycles, &afterpulse, args.seed)?;
    prepare_out(&args.out)?;

    let records_path = args.out.join("records.csv");
    io::write_records(&records_path, &run.records)?;
    let sidecar_path = io::sidecar_path(&records_path);
    io::write_json(
        &sidecar_path,
        &RecordSidecar {
            config,
            source,
            seed: args.seed,
            p_a: args.p_a,
            cycles: args.cycles,
        },
    )?;
    manifest
        .output(&records_path)
        .output(&sidecar_path)
        .finish(&args.out)
}

#[allow(clippy::too_many_arguments)]
fn fit(
    records_path: &Path,
    config_path: &Path,
    method: Method,
    p_a: f64,
    k: usize,
    grid: &str,
    out: &Path,
) -> CmdResult {
    let mut manifest = RunManifest::start("fit");
    let config = read_config(config_path)?;
    manifest.config(config_path)?.input(records_path);
    let grid = parse_grid(grid)?;
    let records = read_records_for(records_path, &config)?;
    let method = match method {
        Method::Binomial => FitMethod::Binomial,
        Method::BinomialCorrected => {
            AfterpulseModel::new(p_a)?;
            FitMethod::BinomialCorrected { afterpulse: p_a }
        }
        Method::Signature => FitMethod::Signature,
    };
    let result = fit_records(&records, &config, method, k, &grid)?;
    prepare_out(out)?;
    let fit_path = out.join("fit.json");
    let curve_path = out.join("curve.csv");
    io::write_json(&fit_path, &result)?;
    write_file(&curve_path, &result.curve_csv().unwrap_or_default())?;
    manifest.output(&fit_path).output(&curve_path).finish(out)
}

fn reconstruct(
    records_path: &Path,
    config_path: &Path,
    k: usize,
    init: Option<&Path>,
    options: &FreeFormOptions,
    out: &Path,
) -> CmdResult {
    let mut manifest = RunManifest::start("reconstruct");
    let config = read_config(config_path)?;
    manifest.config(config_path)?.input(records_path);
    let init = match init {
        Some(path) => {
            manifest.input(path);
            io::read_state(path)?
        }
        None => PhotonNumberDistribution::uniform(k),
    };
    let records = read_records_for(records_path, &config)?;
    let observed = estimate_signature_probs(&records, config.bins())?;
    let result = free_form_fit(&observed, &config, k, &init, options)?;
    if !result.converged {
        eprintln!("warning: simplex did not converge within the iteration budget");
    }
    prepare_out(out)?;
    let path = out.join("reconstruction.json");
    io::write_json(&path, &result)?;
    manifest.output(&path).finish(out)
}

fn signature_stats(
    records_path: &Path,
    top_k: Option<usize>,
    bins: Option<usize>,
    out: &Path,
) -> CmdResult {
    let mut manifest = RunManifest::start("signature-stats");
    manifest.input(records_path);
    let bins = match (bins, io::read_sidecar(records_path)?) {
        (Some(b), _) => b,
        (None, Some(sidecar)) => sidecar.bins(),
        (None, None) => presets::ANALYSED_BINS,
    };
    if !(1..=30).contains(&bins) {
        return Err(Failure::Input(format!("bin count {bins} outside 1..=30")));
    }
    let records = io::read_records(records_path, bins)?;
    if records.is_empty() {
        return Err(Failure::Input(format!(
            "{} holds no records",
            records_path.display()
        )));
    }
    let mut counts = vec![0u64; 1 << bins];
    for r in &records {
        counts[r.signature.index() as usize] += 1;
    }
    let mut rows: Vec<(usize, u64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(i, c)| (i, *c))
        .collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    if let Some(k) = top_k {
        rows.truncate(k);
    }
    let total = records.len() as f64;
    let mut csv = String::from("index,pattern,count,frequency\n");
    for (index, count) in rows {
        let signature = loopsig::Signature::from_index(index as u64, bins)?;
        let _ = writeln!(
            csv,
            "{index},{},{count},{}",
            signature.pattern(),
            count as f64 / total
        );
    }
    prepare_out(out)?;
    let path = out.join("signature_stats.csv");
    write_file(&path, &csv)?;
    manifest.output(&path).finish(out)
}

/// Parses `LO:HI:STEPS`.
fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Input(format!("grid `{spec}` is not LO:HI:STEPS"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, steps] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let steps: usize = steps.trim().parse().map_err(|_| bad())?;
    Ok(nbar_grid(lo, hi, steps)?)
}
