//! `polaritonics`: polariton dispersions, Hopfield coefficients, thermal
//! phonon correlations, THz-TDS reduction, and coupling-strength fits,
//! driven by a JSON run configuration.

mod commands;
mod config;
mod io;

use anyhow::Result;
use clap::{Parser, Subcommand};
use commands::Ctx;
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "polaritonics", version, about)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for synthetic noise; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output (check results still print).
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Polariton branches across the cavity-frequency grid.
    Dispersion,
    /// Hopfield coefficients, weights, and the secular cross-check at the
    /// configured cavity frequency.
    Hopfield,
    /// Second-order phonon correlations over the configured grids.
    G2,
    /// Fit plasma frequencies to a peak table.
    Fit,
    /// Extract Lorentzian peaks from a transmission spectrum or trace pair.
    Peaks,
    /// Thin-film conductivity and dielectric function from transmission.
    Tinkham,
    /// Cross-check spectra and ground-state correlators against truncated
    /// Fock diagonalization at reduced coupling.
    #[command(alias = "oracle-check")]
    Oracle,
    /// Generate synthetic spectra, traces, and peak tables.
    Synth,
}

fn run(cli: &Cli) -> Result<()> {
    let (config, base) = RunConfig::load(&cli.config)?;
    let ctx = Ctx {
        config: &config,
        base: &base,
        out: &cli.out,
        seed: cli.seed.unwrap_or(config.seed),
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Dispersion => commands::cmd_dispersion(&ctx),
        Command::Hopfield => commands::cmd_hopfield(&ctx),
        Command::G2 => commands::cmd_g2(&ctx),
        Command::Fit => commands::cmd_fit(&ctx),
        Command::Peaks => commands::cmd_peaks(&ctx),
        Command::Tinkham => commands::cmd_tinkham(&ctx),
        Command::Oracle => commands::cmd_oracle(&ctx),
        Command::Synth => commands::cmd_synth(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
