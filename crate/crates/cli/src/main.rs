#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod plot;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::commands::{Command, Run};
use crate::config::RunConfig;
use crate::error::CliError;

/// Singular solutions and bifurcation curves of the radial Gross-Pitaevskii equation.
#[derive(Debug, Parser)]
#[command(name = "gpss", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Independent sweep points on this many threads instead of warm starts.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    parallel: Option<u64>,
    /// Draw sampled residual checks from entropy instead of a fixed seed.
    #[arg(long)]
    seed_free: bool,
    /// Height for `shoot`.
    #[arg(long)]
    theta: Option<f64>,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    let run = Run::new(config, cli.parallel.map(|n| n as usize), cli.seed_free, cli.theta);
    let summary = run.execute(cli.command)?;
    let failed: Vec<_> = summary.failed().collect();
    for c in &failed {
        eprintln!("{c}");
    }
    Ok(if failed.is_empty() { 0 } else { 3 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = cli.command.name();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("gpss {command}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
