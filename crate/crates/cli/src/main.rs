//! `ple`: simulate and analyse PLE spectroscopy of Er ensembles.
//!
//! Exit codes: 0 success, 1 malformed configuration or input, 2 analysis
//! failure (including failed acceptance criteria in `reproduce`).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::Format;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("analysis failed: {0}")]
    Analysis(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Analysis(_) => 2,
        }
    }
}

impl From<ple_core::Error> for CliError {
    fn from(e: ple_core::Error) -> Self {
        use ple_core::Error as E;
        match e {
            E::InsufficientData { .. } | E::RankDeficient | E::NoHole { .. } | E::ModelSelection(_) => CliError::Analysis(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ple", version, about = "Simulate and analyse resonant PLE spectroscopy of Er ensembles")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Format of report files.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a PLE survey spectrum from a catalog.
    SimulateSpectrum(commands::SimulateSpectrum),
    /// Synthesize on- and off-resonant decay traces for one line.
    SimulateDecay(commands::SimulateDecay),
    /// Simulate a transient spectral-hole profile.
    SimulateHole(commands::SimulateHole),
    /// Zeeman components of a site at a given field.
    Zeeman(commands::Zeeman),
    /// Detect and fit the lines of a survey spectrum.
    AnalyzeSpectrum(commands::AnalyzeSpectrum),
    /// Background-subtracted lifetime from on/off traces.
    AnalyzeLifetime(commands::AnalyzeLifetime),
    /// Hole width and homogeneous linewidth bound from a hole profile.
    AnalyzeHole(commands::AnalyzeHole),
    /// Match optical lines to an electrically detected line list.
    Match(commands::Match),
    /// Cavity mode volume and damping for a target Purcell factor.
    Purcell(commands::Purcell),
    /// Run every acceptance check and report pass/fail.
    Reproduce(commands::Reproduce),
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).try_init();
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("PLE_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| CliError::Config(format!("PLE_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.global.verbose);
    match init_threads().and_then(|_| commands::run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ple: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
