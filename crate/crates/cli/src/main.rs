//! `absorbd`: absorbing-boundary detection runs from a TOML config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "absorbd", version, about = "Detection-time and -place statistics from absorbing boundary evolutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve, record the detection distribution and the survival curve.
    Run(CommonArgs),
    /// Build the discrete POVM in dense form and check completeness.
    Povm(CommonArgs),
    /// Monte Carlo detect-collapse-continue runs, optionally the exhaustive two-particle table.
    Cascade(CommonArgs),
    /// Eigenvalues and eigenvector Gram matrix of H.
    Spectrum(CommonArgs),
    /// Timed invariant sweep; `--config` points to a bench config (built-in cases otherwise).
    Bench(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; the ABSORBD_OUT environment variable takes precedence.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub jobs: usize,
    /// Accept κ < 0 (emitting boundary).
    #[arg(long)]
    pub allow_emitting: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(absorb_core::Error),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl From<absorb_core::Error> for CliError {
    fn from(e: absorb_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Json(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl CliError {
    /// 2 config, 3 size or feasibility guard, 4 runtime invariant, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        use absorb_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Json(_) => 1,
            CliError::Core(e) if e.is_guard() => 3,
            CliError::Core(e) => match e {
                E::Invariant(_) | E::SingularSystem(_) | E::Eigensolver(_) => 4,
                E::Io(_) | E::Csv(_) => 1,
                _ => 2,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::Povm(a) => commands::povm(a),
        Command::Cascade(a) => commands::cascade(a),
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("absorbd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
