use std::fs::File;
use std::path::Path;

use anyhow::{Context, Result};
use clear_core::clear::{fit_clear, ClearFit};
use clear_core::components::{read_components, write_intervals};
use clear_core::UncertaintyComponentsF64;
use serde_json::json;

use crate::config::{ExperimentConfig, Mode};
use crate::output;
use crate::RunReport;

fn read(path: &Path, require_y: bool) -> Result<UncertaintyComponentsF64> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_components(file, require_y).with_context(|| format!("reading {}", path.display()))
}

pub fn fit_record(fit: &ClearFit<f64>) -> serde_json::Value {
    json!({
        "lambda_star": fit.lambda_star,
        "gamma1": fit.gamma1,
        "gamma2": fit.gamma2,
        "alpha": fit.alpha.value(),
        "grid_size": fit.grid_size(),
        "val_quantile_loss": fit.val_quantile_loss,
    })
}

/// Calibrates user-supplied components and writes `fits.jsonl` and `intervals.csv`.
pub fn run_calibrate(config: &ExperimentConfig, out: &Path, _seed_offset: u64) -> Result<RunReport> {
    config.validate(Mode::Calibrate)?;
    let paths = config.calibrate.as_ref().unwrap();
    let alpha = config.alpha(Mode::Calibrate)?;
    let cal = read(&paths.calibration, true)?;
    let test = read(&paths.test, false)?;
    let fit = fit_clear(&cal, &config.grid()?, alpha, config.fit_mode).context("calibrating")?;
    let intervals = fit.intervals(&test);

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    output::write_jsonl(&out.join("fits.jsonl"), &[fit_record(&fit)])?;
    let file = File::create(out.join("intervals.csv")).context("creating intervals.csv")?;
    write_intervals(file, &intervals)?;
    Ok(RunReport { cells: 1, failed: 0 })
}
