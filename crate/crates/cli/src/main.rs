//! `heatopt` command-line driver.
//!
//! Exit codes: 0 success, 1 oracle or validation failure, 2 runtime failure.

mod commands;

use clap::{Parser, Subcommand};
use heatopt::config::parse_config;
use heatopt::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "heatopt", version, about = "Two-material heat conduction design by a level-set method")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Dotted `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; falls back to `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the level-set optimization.
    Optimize(Common),
    /// Solve the state for the initial design.
    Solve(Common),
    /// Smallest Dirichlet eigenvalue and the source/initial-value check.
    Eigen(Common),
    /// Run the oracle suites.
    Verify(Common),
    /// Optimize over a list of horizons or regularization weights.
    Sweep(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&Common, fn(&_, &_) -> heatopt::Result<bool>) = match &cli.command {
        Command::Optimize(a) => (a, commands::optimize),
        Command::Solve(a) => (a, commands::solve),
        Command::Eigen(a) => (a, commands::eigen),
        Command::Verify(a) => (a, commands::verify),
        Command::Sweep(a) => (a, commands::sweep),
    };
    let cfg = match parse_config(&args.config, &args.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let Some(out) = args.out.clone().or_else(|| cfg.output_dir.clone()) else {
        eprintln!("error: no output directory (--out or output_dir)");
        return ExitCode::from(1);
    };
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::from(2);
    }
    match run(&cfg, &out) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (Error::InvalidArgument(_) | Error::CoefficientBounds { .. } | Error::InvalidDesign(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
