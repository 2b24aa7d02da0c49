use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clear_core::metrics::MetricsReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub d: usize,
    pub noise: String,
    pub seed: u64,
    pub method: String,
    pub picp: f64,
    pub niw: f64,
    pub nciw: f64,
    pub quantile_loss: f64,
    pub aisl: f64,
    pub c_test_cal: f64,
}

impl MetricsRow {
    pub fn new(experiment: &str, d: usize, noise: &str, seed: u64, method: &str, r: &MetricsReport<f64>) -> Self {
        MetricsRow {
            experiment: experiment.to_string(),
            d,
            noise: noise.to_string(),
            seed,
            method: method.to_string(),
            picp: r.picp,
            niw: r.niw,
            nciw: r.nciw,
            quantile_loss: r.quantile_loss,
            aisl: r.aisl,
            c_test_cal: r.c_test_cal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalRow {
    pub method: String,
    pub d: usize,
    pub noise: String,
    pub radius: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub experiment: String,
    pub seed: u64,
    pub method: String,
    pub row: usize,
    pub y: f64,
    pub f_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with a header even when there are no rows.
pub fn write_csv_with_header<S: Serialize>(path: &Path, header: &[&str], rows: &[S]) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(header)?;
        w.flush()?;
        return Ok(());
    }
    write_csv(path, rows)
}

pub fn write_jsonl(path: &Path, records: &[serde_json::Value]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub const METRICS_HEADER: [&str; 11] = [
    "experiment",
    "d",
    "noise",
    "seed",
    "method",
    "picp",
    "niw",
    "nciw",
    "quantile_loss",
    "aisl",
    "c_test_cal",
];
pub const CONDITIONAL_HEADER: [&str; 7] = ["method", "d", "noise", "radius", "coverage", "mean_width", "replicates"];
pub const INTERVALS_HEADER: [&str; 8] = ["experiment", "seed", "method", "row", "y", "f_hat", "lower", "upper"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let row = MetricsRow {
            experiment: "synthetic".into(),
            d: 1,
            noise: "homoskedastic".into(),
            seed: 3,
            method: "CLEAR".into(),
            picp: 0.1 + 0.2,
            niw: 1.0 / 3.0,
            nciw: f64::INFINITY,
            quantile_loss: 1e-300,
            aisl: 123456.789_012_345_67,
            c_test_cal: 0.9999999999999999,
        };
        write_csv(&path, std::slice::from_ref(&row)).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let back: MetricsRow = rdr.deserialize().next().unwrap().unwrap();
        assert_eq!(back, row);
    }

    #[test]
    fn empty_tables_keep_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_csv_with_header::<ConditionalRow>(&path, &CONDITIONAL_HEADER, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().trim(), CONDITIONAL_HEADER.join(","));
    }
}
