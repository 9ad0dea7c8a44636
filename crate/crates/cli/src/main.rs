//! `atomdet`: laser-profile design for fluorescence detection of slow atoms.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "atomdet",
    version,
    about = "Design and check laser profiles for fluorescence detection of slow atoms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One-channel absorption A(v) of the configured profile.
    Scan(Common),
    /// Two-channel detection probability of the configured profile.
    Detect(Common),
    /// Optimize segment detunings and Rabi frequencies over the velocity grid.
    Optimize(Common),
    /// Time-dependent first-photon statistics of a wave packet.
    Propagate(Common),
    /// Compare one- and two-channel absorption and check weak driving.
    Validate(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, env = "ATOMDET_CONFIG")]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, env = "ATOMDET_OUT")]
    out: Option<PathBuf>,
    /// Optimizer seed; overrides `optimize.seed`.
    #[arg(long, env = "ATOMDET_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "ATOMDET_THREADS")]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (Command::Scan(common)
    | Command::Detect(common)
    | Command::Optimize(common)
    | Command::Propagate(common)
    | Command::Validate(common)) = &cli.command;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config(config::ConfigError {
                line: None,
                message: "--threads must be at least 1".into(),
            }));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let ctx = commands::Context::load(common)?;
    match cli.command {
        Command::Scan(_) => commands::scan(&ctx),
        Command::Detect(_) => commands::detect(&ctx),
        Command::Optimize(_) => commands::optimize(&ctx),
        Command::Propagate(_) => commands::propagate(&ctx),
        Command::Validate(_) => commands::validate(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
