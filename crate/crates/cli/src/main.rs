// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use config::RunConfig;
use error::CliError;
use output::{Format, Output};

/// Simulation and analysis of single-ion position and force measurements.
#[derive(Debug, Parser)]
#[command(name = "iontrack", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Format of tabular output; summaries are always JSON.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Thermal resonance curves and their widths.
    Lineshape,
    /// Simulated resonance scan in the fit-spectrum input format.
    Spectrum,
    /// Fit a resonance scan (columns detuning_hz, counts, shots).
    FitSpectrum {
        #[arg(long)]
        input: PathBuf,
    },
    /// Closed-loop frequency tracking, with a voltage scan when one is configured.
    Track,
    /// Monte-Carlo estimator spread versus total measurement time.
    Sensitivity,
    /// Field gradient from the resonance frequencies of an ion string (column frequency_hz).
    Calibrate {
        #[arg(long)]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let cfg = cfg.resolve()?;
    let out = Output::new(&cli.out, cli.format)?;
    match &cli.command {
        Command::Lineshape => commands::lineshape(&cfg, &out),
        Command::Spectrum => commands::spectrum(&cfg, &out),
        Command::FitSpectrum { input } => commands::fit_spectrum_file(&cfg, input, &out),
        Command::Track => commands::track(&cfg, &out),
        Command::Sensitivity => commands::sensitivity(&cfg, &out),
        Command::Calibrate { input } => commands::calibrate(&cfg, input, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
