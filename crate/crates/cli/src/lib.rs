//! Experiment runner: synthetic simulations, CSV benchmarks and calibration of externally
//! computed uncertainty components.

pub mod benchmark;
pub mod calibrate;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod simulate;

use std::path::Path;

use anyhow::Result;

pub use config::{ExperimentConfig, Mode};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunReport {
    pub cells: usize,
    pub failed: usize,
}

pub fn run(mode: Mode, config: &ExperimentConfig, out: &Path, seed_offset: u64) -> Result<RunReport> {
    match mode {
        Mode::Simulate => simulate::run_simulate(config, out, seed_offset),
        Mode::Benchmark => benchmark::run_benchmark(config, out, seed_offset),
        Mode::Calibrate => calibrate::run_calibrate(config, out, seed_offset),
    }
}
