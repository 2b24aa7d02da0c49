use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::Parser;
use clear_uq::{run, ExperimentConfig, Mode};

/// Calibrated prediction intervals from aleatoric and epistemic uncertainty.
#[derive(Debug, Parser)]
#[command(name = "clear-uq", version)]
struct Cli {
    /// What to run; may also come from `--mode` or the config file.
    #[arg(value_enum)]
    command: Option<Mode>,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Added to every configured seed.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

fn resolve_mode(cli: &Cli, config: &ExperimentConfig) -> Result<Mode> {
    let given: Vec<Mode> = [cli.command, cli.mode].into_iter().flatten().collect();
    match (given.as_slice(), config.mode) {
        ([a, b], _) if a != b => bail!("subcommand {a:?} conflicts with --mode {b:?}"),
        ([m, ..], _) => Ok(*m),
        ([], Some(m)) => Ok(m),
        ([], None) => bail!("no mode given: pass simulate, benchmark or calibrate"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = ExperimentConfig::load(&cli.config).and_then(|config| {
        let mode = resolve_mode(&cli, &config)?;
        run(mode, &config, &cli.out, cli.seed_offset)
    });
    match result {
        Ok(report) if report.failed == 0 => ExitCode::SUCCESS,
        Ok(report) => {
            eprintln!("{} of {} cells failed", report.failed, report.cells);
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
