mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{complete::CompleteArgs, ingest::IngestArgs, simulate::SimulateArgs};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TCACHE_OUT_DIR";

#[derive(Parser)]
#[command(name = "tcache", version, about = "Tensor completion and edge-caching experiments")]
struct Cli {
    /// TOML file with per-command defaults; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete a COO tensor and write RSE traces.
    Complete(CompleteArgs),
    /// Run the online prediction and caching loop.
    Simulate(SimulateArgs),
    /// Build per-slot demand tensors from a ratings file.
    Ingest(IngestArgs),
}

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input data: exit code 2.
    Input(String),
    /// Anything else: exit code 1.
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<tcache::Error> for CliError {
    fn from(e: tcache::Error) -> Self {
        use tcache::Error as E;
        let input = match &e {
            E::Slot { source, .. } => !matches!(
                **source,
                E::NonFinite(_) | E::DegenerateGradient | E::ZeroOverlap | E::EmptyActiveSet
            ),
            E::NonFinite(_) | E::DegenerateGradient | E::ZeroOverlap | E::EmptyActiveSet => false,
            _ => true,
        };
        if input {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = config::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Complete(args) => commands::complete::run(args, file.complete.unwrap_or_default()),
        Command::Simulate(args) => commands::simulate::run(args, file.simulate.unwrap_or_default()),
        Command::Ingest(args) => commands::ingest::run(args, file.ingest.unwrap_or_default()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
