use std::path::Path;

use anyhow::{Context, Result};
use clear_core::data::{encode_all, load_csv, split, Dataset};
use clear_core::metrics::evaluate;
use clear_core::seed::derive_seed;
use serde_json::json;

use crate::config::{ExperimentConfig, Mode};
use crate::output::{self, IntervalRow, MetricsRow};
use crate::pipeline::{FittedPipeline, Settings, METHODS};
use crate::RunReport;

fn label_seed(label: &str) -> u64 {
    // FNV-1a, so dataset streams do not depend on their position in the config
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn run_benchmark(config: &ExperimentConfig, out: &Path, seed_offset: u64) -> Result<RunReport> {
    config.validate(Mode::Benchmark)?;
    let settings = Settings {
        alpha: config.alpha(Mode::Benchmark)?,
        pool: config.pool.clone(),
        k: config.k,
        b: config.b,
        aleatoric_bags: config.aleatoric_bags,
        grid: config.grid()?,
        fit_mode: config.fit_mode,
    };
    let fractions = config.split.unwrap_or([0.6, 0.2, 0.2]);
    let keep_intervals = config.write_intervals.unwrap_or(true);

    let mut metrics = Vec::new();
    let mut intervals = Vec::new();
    let mut fits = Vec::new();
    let mut report = RunReport::default();
    for ds_config in &config.datasets {
        let label = ds_config.label();
        let data: Result<Dataset<f64>> = load_csv(&ds_config.path, &ds_config.target)
            .and_then(|d| encode_all(&d))
            .with_context(|| format!("loading {}", ds_config.path.display()));
        let seeds = config.seeds(seed_offset);
        let data = match data {
            Ok(d) => d,
            Err(e) => {
                report.cells += seeds.len();
                report.failed += seeds.len();
                eprintln!("dataset {label} failed: {e:#}");
                fits.push(json!({"experiment": label, "error": format!("{e:#}")}));
                continue;
            }
        };
        for seed in seeds {
            report.cells += 1;
            let cell_seed = derive_seed(seed, &[label_seed(&label)]);
            let cell = (|| -> Result<_> {
                let idx = split(data.n(), fractions, derive_seed(cell_seed, &[1]))?;
                let (train, cal, test) = (data.select(&idx.train), data.select(&idx.calibration), data.select(&idx.test));
                let pipe = FittedPipeline::fit(&train, &cal, &settings, derive_seed(cell_seed, &[2]))?;
                let pred = pipe.predict(test.features().view())?;
                let y = test.target();
                let mut rows = Vec::new();
                let mut ivs = Vec::new();
                for (m, iv) in METHODS.iter().zip(&pred.intervals) {
                    let r = evaluate(iv, pred.f_hat.view(), y.view(), settings.alpha).with_context(|| format!("metrics for {m}"))?;
                    rows.push(MetricsRow::new(&label, data.d(), "", seed, m, &r));
                    if keep_intervals {
                        for i in 0..y.len() {
                            ivs.push(IntervalRow {
                                experiment: label.clone(),
                                seed,
                                method: m.to_string(),
                                row: idx.test[i],
                                y: y[i],
                                f_hat: pred.f_hat[i],
                                lower: iv.lower[i],
                                upper: iv.upper[i],
                            });
                        }
                    }
                }
                let fit = json!({"experiment": label, "d": data.d(), "seed": seed, "fit": pipe.summary()});
                Ok((rows, ivs, fit))
            })();
            match cell {
                Ok((rows, ivs, fit)) => {
                    metrics.extend(rows);
                    intervals.extend(ivs);
                    fits.push(fit);
                }
                Err(e) => {
                    report.failed += 1;
                    eprintln!("cell {label} seed={seed} failed: {e:#}");
                    fits.push(json!({"experiment": label, "seed": seed, "error": format!("{e:#}")}));
                }
            }
        }
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    output::write_csv_with_header(&out.join("metrics.csv"), &output::METRICS_HEADER, &metrics)?;
    output::write_jsonl(&out.join("fits.jsonl"), &fits)?;
    if keep_intervals {
        output::write_csv_with_header(&out.join("intervals.csv"), &output::INTERVALS_HEADER, &intervals)?;
    }
    Ok(report)
}
