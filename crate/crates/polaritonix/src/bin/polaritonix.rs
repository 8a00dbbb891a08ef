use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use polaritonix::config::RunConfig;
use polaritonix::error::Error;
use polaritonix::runner::{self, SweepParameter};

/// Elastic polariton spectra of driven molecule-cavity systems with Brownian
/// vibrational dissipation.
#[derive(Parser)]
#[command(name = "polaritonix", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the key-value run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; defaults to output.path from the config, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override numerics.grid_points.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Override numerics.grid_half_span.
    #[arg(long)]
    grid_span: Option<f64>,
    /// Override numerics.tolerance (series truncation).
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Elastic transmission spectrum and absorption function on a grid.
    Spectrum(Common),
    /// Molecular absorption profile on a grid.
    Absorption(Common),
    /// Polariton observables (Rabi splitting, linewidths, ratios).
    Features(Common),
    /// Sweep detuning or temperature and tabulate the observables.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to sweep: detuning | temperature.
        #[arg(long)]
        param: String,
        /// start:stop:count
        #[arg(long)]
        range: String,
    },
    /// Coupled-oscillator (Lorentzian molecule) reference model.
    Baseline(Common),
    /// Oracle cross-checks: normalization, convolution table, series vs
    /// direct quadrature, detailed balance.
    Validate(Common),
}

fn load(common: &Common, needs_modes: bool) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::from_file(&common.config)?;
    if let Some(n) = common.grid_points {
        if n < 16 {
            return Err(Error::Config(format!("--grid-points too small: {n}")));
        }
        cfg.grid_points = n;
    }
    if let Some(s) = common.grid_span {
        if !(s > 0.0) {
            return Err(Error::Config(format!("--grid-span must be > 0, got {s}")));
        }
        cfg.grid_half_span = Some(s);
    }
    if let Some(t) = common.tolerance {
        if !(t > 0.0) {
            return Err(Error::Config(format!("--tolerance must be > 0, got {t}")));
        }
        cfg.ctrl.tolerance = t;
    }
    if needs_modes {
        cfg.require_modes()?;
    }
    Ok(cfg)
}

fn parse_range(range: &str) -> Result<(f64, f64, usize), Error> {
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("--range expects start:stop:count, got '{range}'")));
    }
    let start = parts[0]
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("bad range start '{}'", parts[0])))?;
    let stop = parts[1]
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("bad range stop '{}'", parts[1])))?;
    let count = parts[2]
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("bad range count '{}'", parts[2])))?;
    Ok((start, stop, count))
}

fn open_output(common: &Common, cfg: &RunConfig) -> Result<Box<dyn Write>, Error> {
    let path = common.out.clone().or_else(|| cfg.output.clone());
    match path {
        Some(p) => {
            let file = std::fs::File::create(&p)?;
            Ok(Box::new(std::io::BufWriter::new(file)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("POLARITONIX_THREADS") {
        let n: usize = threads
            .parse()
            .map_err(|_| Error::Config(format!("POLARITONIX_THREADS must be a number, got '{threads}'")))?;
        if n > 0 {
            // ignore the error if a global pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match &cli.command {
        Command::Spectrum(c) => {
            let cfg = load(c, true)?;
            let mut out = open_output(c, &cfg)?;
            runner::run_spectrum(&cfg, &mut out)?;
            out.flush()?;
        }
        Command::Absorption(c) => {
            let cfg = load(c, true)?;
            let mut out = open_output(c, &cfg)?;
            runner::run_absorption(&cfg, &mut out)?;
            out.flush()?;
        }
        Command::Features(c) => {
            let cfg = load(c, true)?;
            let mut out = open_output(c, &cfg)?;
            runner::run_features(&cfg, &mut out)?;
            out.flush()?;
        }
        Command::Sweep { common, param, range } => {
            let cfg = load(common, true)?;
            let param: SweepParameter = param.parse()?;
            let (start, stop, count) = parse_range(range)?;
            let mut out = open_output(common, &cfg)?;
            runner::run_sweep(&cfg, param, start, stop, count, &mut out)?;
            out.flush()?;
        }
        Command::Baseline(c) => {
            let cfg = load(c, false)?;
            let mut out = open_output(c, &cfg)?;
            runner::run_baseline(&cfg, &mut out)?;
            out.flush()?;
        }
        Command::Validate(c) => {
            let cfg = load(c, true)?;
            let mut out = open_output(c, &cfg)?;
            runner::run_validate(&cfg, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidMode(_) | Error::InvalidEnvironment(_) => 2,
        Error::Io(_) => 3,
        Error::AmbiguousSplitting { .. }
        | Error::NoSplitting
        | Error::NoPeaks(..)
        | Error::OverlappingPeaks { .. }
        | Error::NotBracketed(..)
        | Error::CriticalDamping
        | Error::NoDissipation(_) => 4,
        Error::ValidationFailed(_) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
