use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clear_core::clear::{default_lambda_grid, FitMode, LambdaGrid};
use clear_core::learners::{LearnerKind, LearnerSpec};
use clear_core::synthetic::NoiseKind;
use clear_core::Alpha;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Benchmark,
    Calibrate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    /// Defaults to 0.1 for simulations and 0.05 otherwise.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Explicit seeds; when empty, `0..replicates` is used.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default = "default_pool")]
    pub pool: Vec<LearnerSpec>,
    #[serde(default = "one")]
    pub k: usize,
    #[serde(default = "hundred")]
    pub b: usize,
    #[serde(default = "hundred")]
    pub aleatoric_bags: usize,
    /// Replaces the default lambda grid; 0 and 1 are always added.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub split: Option<[f64; 3]>,
    #[serde(default)]
    pub fit_mode: FitMode,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub calibrate: Option<CalibrateConfig>,
    #[serde(default)]
    pub write_intervals: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_dims")]
    pub d: Vec<usize>,
    #[serde(default = "default_noise")]
    pub noise: NoiseKind,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_sphere_points")]
    pub sphere_points: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n: default_n(),
            d: default_dims(),
            noise: default_noise(),
            test_size: default_test_size(),
            radii: default_radii(),
            sphere_points: default_sphere_points(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub target: String,
    #[serde(default)]
    pub name: Option<String>,
}

impl DatasetConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.path.display().to_string())
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub calibration: PathBuf,
    pub test: PathBuf,
}

fn one() -> usize {
    1
}
fn hundred() -> usize {
    100
}
fn default_n() -> usize {
    5000
}
fn default_dims() -> Vec<usize> {
    vec![1]
}
fn default_noise() -> NoiseKind {
    NoiseKind::Homoskedastic
}
fn default_test_size() -> usize {
    1000
}
fn default_radii() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
}
fn default_sphere_points() -> usize {
    2000
}

pub fn default_pool() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::new(LearnerKind::LinearPinball)
            .with("spline_knots", 6.0)
            .with("solver", "irls"),
        LearnerSpec::new(LearnerKind::QuantileForest)
            .with("trees", 50.0)
            .with("min_leaf", 10.0)
            .with("max_features", 0.5),
        LearnerSpec::new(LearnerKind::KnnQuantile).with("k", 20.0),
    ]
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    /// Relative data paths are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            fix(&mut d.path);
        }
        if let Some(c) = &mut self.calibrate {
            fix(&mut c.calibration);
            fix(&mut c.test);
        }
    }

    pub fn alpha(&self, mode: Mode) -> Result<Alpha> {
        let a = self.alpha.unwrap_or(if mode == Mode::Simulate { 0.1 } else { 0.05 });
        Alpha::new(a).context("alpha")
    }

    pub fn seeds(&self, offset: u64) -> Vec<u64> {
        let base: Vec<u64> = if self.seeds.is_empty() {
            (0..self.replicates.unwrap_or(1) as u64).collect()
        } else {
            self.seeds.clone()
        };
        base.into_iter().map(|s| s.wrapping_add(offset)).collect()
    }

    pub fn grid(&self) -> Result<LambdaGrid<f64>> {
        match &self.grid {
            None => Ok(default_lambda_grid()),
            Some(v) => Ok(LambdaGrid::new(v.iter().copied())?.with_anchors()),
        }
    }

    pub fn validate(&self, mode: Mode) -> Result<()> {
        self.alpha(mode)?;
        if self.seeds.is_empty() && self.replicates == Some(0) {
            bail!("replicates must be at least 1");
        }
        self.grid()?;
        if mode == Mode::Calibrate {
            if self.calibrate.is_none() {
                bail!("calibrate mode needs a \"calibrate\" section with calibration and test paths");
            }
            return Ok(());
        }
        if self.pool.is_empty() {
            bail!("learner pool is empty");
        }
        for spec in &self.pool {
            spec.validate().with_context(|| format!("pool entry {}", spec.label()))?;
        }
        if self.k == 0 || self.k > self.pool.len() {
            bail!("k = {} must lie in 1..={}", self.k, self.pool.len());
        }
        if self.b == 0 || self.aleatoric_bags == 0 {
            bail!("b and aleatoric_bags must be at least 1");
        }
        if let Some(s) = self.split {
            if s.iter().any(|f| !(0.0..=1.0).contains(f)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                bail!("split fractions must be in [0, 1] and sum to 1");
            }
        }
        if let FitMode::Conformalized { validation_fraction, .. } = self.fit_mode {
            if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
                bail!("validation_fraction must lie in (0, 1)");
            }
        }
        match mode {
            Mode::Simulate => {
                let sim = self.simulation.clone().unwrap_or_default();
                if sim.radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                    bail!("radii must be finite and nonnegative");
                }
                if sim.d.is_empty() || sim.d.contains(&0) {
                    bail!("simulation dimensions must be positive");
                }
                if sim.n < 10 || sim.test_size == 0 || sim.sphere_points == 0 {
                    bail!("simulation sizes too small");
                }
            }
            Mode::Benchmark => {
                if self.datasets.is_empty() {
                    bail!("benchmark mode needs at least one dataset");
                }
            }
            Mode::Calibrate => {}
        }
        Ok(())
    }
}
