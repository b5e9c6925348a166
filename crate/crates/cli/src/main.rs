use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pdc_cli::pipeline;

/// Simulator for a fiber-pigtailed type-II down-conversion source.
#[derive(Parser)]
#[command(name = "pdcsim", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true, default_value = "pdcsim.toml")]
    config: PathBuf,
    /// Output directory, overriding the configuration.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set grid.points=256`.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Seed for experiment k becomes SEED + k.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only write files.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Second-harmonic tuning curve of the poled section.
    Shg,
    /// Degeneracy wavelength, index calibration and poling period.
    Design,
    /// Joint spectrum, marginals, Schmidt modes and heralded pulse length.
    Jsa,
    /// Transmission budget and predicted heralding efficiency.
    Budget,
    /// Monte-Carlo counting experiments.
    Simulate,
    /// Every stage followed by the configured checks.
    Report,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (r, out) = pdc_cli::open(&cli.config, &cli.overrides, cli.seed, cli.out, cli.quiet)?;
    match cli.command {
        Command::Shg => pipeline::shg(&r, &out).map(drop),
        Command::Design => pipeline::design(&r, &out).map(drop),
        Command::Jsa => pipeline::jsa(&r, &out).map(drop),
        Command::Budget => pipeline::budget(&r, &out).map(drop),
        Command::Simulate => pdc_cli::simulate(&r, &out).map(drop),
        Command::Report => pdc_cli::full_report(&r, &out).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pdcsim: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
