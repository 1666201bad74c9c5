//! Command-line front end for the `saddle-switch` library.
//!
//! Exit codes: 0 success, 1 failed self-check, 2 divergence, 3 I/O error,
//! 64 invalid command line or configuration.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{EXIT_CHECK_FAILED, EXIT_DIVERGED, EXIT_IO, EXIT_OK, EXIT_USAGE};
pub use config::{parse_config, to_toml, ConfigError, ConfigErrorKind, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "saddle-switch", version, about = "Switched saddle-search diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one trajectory as CSV.
    Simulate(Common),
    /// Run the [experiment] section: trial CSV and JSON summary.
    Experiment(Common),
    /// Run the [experiment] section at every [sweep] grid point.
    Sweep(Common),
    /// Occupation histogram on a periodized potential.
    Histogram(Common),
    /// Self-check the configured potential.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed (overrides the file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides the file).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
}

fn load(common: &Common) -> Result<commands::Invocation, i32> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", common.config.display());
        EXIT_USAGE
    })?;
    let cfg = parse_config(&text).map_err(|e| {
        eprintln!("error in {}: {e}", common.config.display());
        EXIT_USAGE
    })?;
    Ok(commands::Invocation::new(cfg, common.seed, common.out.clone(), common.workers))
}

/// Run a parsed command line and return the exit code.
pub fn run(cli: Cli) -> i32 {
    let (common, action): (&Common, fn(&commands::Invocation) -> i32) = match &cli.command {
        Command::Simulate(c) => (c, commands::simulate),
        Command::Experiment(c) => (c, commands::experiment),
        Command::Sweep(c) => (c, commands::sweep),
        Command::Histogram(c) => (c, commands::histogram),
        Command::Check { common, corrupt_gradient } => {
            return match load(common) {
                Ok(inv) => commands::check(&inv, *corrupt_gradient),
                Err(code) => code,
            };
        }
    };
    match load(common) {
        Ok(inv) => action(&inv),
        Err(code) => code,
    }
}
