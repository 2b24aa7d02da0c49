use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use clear_core::data::split;
use clear_core::metrics::{evaluate, picp};
use clear_core::seed::derive_seed;
use clear_core::synthetic::{generate_with_seed, sample_targets, sphere_test_points, NoiseKind, SyntheticSpec};
use serde_json::json;

use crate::config::{ExperimentConfig, Mode};
use crate::output::{self, ConditionalRow, MetricsRow};
use crate::pipeline::{FittedPipeline, Settings, METHODS};
use crate::RunReport;

fn noise_name(n: NoiseKind) -> &'static str {
    match n {
        NoiseKind::Homoskedastic => "homoskedastic",
        NoiseKind::Sigma2 => "sigma2",
        NoiseKind::Sigma3 => "sigma3",
    }
}

struct CellResult {
    metrics: Vec<MetricsRow>,
    /// `(method, radius index) -> (coverage, mean width)`
    conditional: Vec<(usize, usize, f64, f64)>,
    fit: serde_json::Value,
}

pub fn run_simulate(config: &ExperimentConfig, out: &Path, seed_offset: u64) -> Result<RunReport> {
    config.validate(Mode::Simulate)?;
    let sim = config.simulation.clone().unwrap_or_default();
    let settings = Settings {
        alpha: config.alpha(Mode::Simulate)?,
        pool: config.pool.clone(),
        k: config.k,
        b: config.b,
        aleatoric_bags: config.aleatoric_bags,
        grid: config.grid()?,
        fit_mode: config.fit_mode,
    };
    let fractions = config.split.unwrap_or([0.7, 0.3, 0.0]);
    let noise = noise_name(sim.noise);

    let mut metrics = Vec::new();
    let mut fits = Vec::new();
    let mut sums: BTreeMap<(usize, usize, usize), (f64, f64, usize)> = BTreeMap::new();
    let mut report = RunReport::default();
    for &d in &sim.d {
        for seed in config.seeds(seed_offset) {
            report.cells += 1;
            let cell_seed = derive_seed(seed, &[d as u64]);
            let cell = (|| -> Result<CellResult> {
                let spec = SyntheticSpec::new(d, sim.noise, derive_seed(cell_seed, &[10]))?;
                let data = generate_with_seed(&spec, sim.n, derive_seed(cell_seed, &[11]))?;
                let idx = split(sim.n, fractions, derive_seed(cell_seed, &[12]))?;
                let (train, cal) = (data.select(&idx.train), data.select(&idx.calibration));
                let pipe = FittedPipeline::fit(&train, &cal, &settings, derive_seed(cell_seed, &[13]))?;

                let test = generate_with_seed(&spec, sim.test_size, derive_seed(cell_seed, &[14]))?;
                let pred = pipe.predict(test.features().view())?;
                let mut rows = Vec::new();
                for (m, iv) in METHODS.iter().zip(&pred.intervals) {
                    let r = evaluate(iv, pred.f_hat.view(), test.target().view(), settings.alpha)
                        .with_context(|| format!("metrics for {m}"))?;
                    rows.push(MetricsRow::new("synthetic", d, noise, seed, m, &r));
                }

                let mut conditional = Vec::new();
                let mut per_radius = Vec::new();
                for (k, &r) in sim.radii.iter().enumerate() {
                    let x = sphere_test_points(d, r, sim.sphere_points, derive_seed(cell_seed, &[15, k as u64]))?;
                    let y = sample_targets(&spec, &x, derive_seed(cell_seed, &[16, k as u64]))?;
                    let p = pipe.predict(x.view())?;
                    for (m, iv) in p.intervals.iter().enumerate() {
                        let cov = picp(iv, y.view())?;
                        let width = iv.widths().mean().unwrap();
                        conditional.push((m, k, cov, width));
                        per_radius.push(json!({"method": METHODS[m], "radius": r, "coverage": cov, "mean_width": width}));
                    }
                }
                let fit = json!({
                    "experiment": "synthetic",
                    "d": d,
                    "noise": noise,
                    "seed": seed,
                    "betas": spec.betas,
                    "fit": pipe.summary(),
                    "conditional": per_radius,
                });
                Ok(CellResult {
                    metrics: rows,
                    conditional,
                    fit,
                })
            })();
            match cell {
                Ok(c) => {
                    metrics.extend(c.metrics);
                    for (m, k, cov, w) in c.conditional {
                        let e = sums.entry((d, m, k)).or_insert((0.0, 0.0, 0));
                        e.0 += cov;
                        e.1 += w;
                        e.2 += 1;
                    }
                    fits.push(c.fit);
                }
                Err(e) => {
                    report.failed += 1;
                    eprintln!("cell d={d} seed={seed} failed: {e:#}");
                    fits.push(json!({"experiment": "synthetic", "d": d, "noise": noise, "seed": seed, "error": format!("{e:#}")}));
                }
            }
        }
    }
    let conditional: Vec<ConditionalRow> = sums
        .into_iter()
        .map(|((d, m, k), (cov, w, count))| ConditionalRow {
            method: METHODS[m].to_string(),
            d,
            noise: noise.to_string(),
            radius: sim.radii[k],
            coverage: cov / count as f64,
            mean_width: w / count as f64,
            replicates: count,
        })
        .collect();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    output::write_csv_with_header(&out.join("metrics.csv"), &output::METRICS_HEADER, &metrics)?;
    output::write_csv_with_header(&out.join("conditional_coverage.csv"), &output::CONDITIONAL_HEADER, &conditional)?;
    output::write_jsonl(&out.join("fits.jsonl"), &fits)?;
    Ok(report)
}
