//! Tabular datasets: CSV ingestion, one-hot encoding, seeded splits and bootstrap resampling.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ColumnKind {
    Numeric,
    /// Values are codes into `levels`, which are sorted lexicographically.
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Feature matrix plus target vector. Every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Array2<T>,
    target: Array1<T>,
    columns: Vec<Column>,
    target_name: String,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset of numeric columns, rejecting rows that hold non-finite values.
    pub fn new(
        features: Array2<T>,
        target: Array1<T>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        if feature_names.len() != features.ncols() {
            return Err(Error::DimensionMismatch {
                expected: features.ncols(),
                got: feature_names.len(),
            });
        }
        let columns = feature_names
            .into_iter()
            .map(|name| Column {
                name,
                kind: ColumnKind::Numeric,
            })
            .collect();
        Self::with_columns(features, target, columns, target_name.into())
    }

    /// Unnamed columns `x1..xd` and target `y`.
    pub fn from_arrays(features: Array2<T>, target: Array1<T>) -> Result<Self> {
        let names = (1..=features.ncols()).map(|i| format!("x{i}")).collect();
        Self::new(features, target, names, "y")
    }

    fn with_columns(
        features: Array2<T>,
        target: Array1<T>,
        columns: Vec<Column>,
        target_name: String,
    ) -> Result<Self> {
        if features.nrows() != target.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: target.len(),
            });
        }
        let bad: Vec<usize> = features
            .axis_iter(Axis(0))
            .zip(target.iter())
            .enumerate()
            .filter(|(_, (row, y))| !y.is_finite() || row.iter().any(|v| !v.is_finite()))
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(Error::NonFinite { rows: bad });
        }
        Ok(Dataset {
            features,
            target,
            columns,
            target_name,
        })
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn target(&self) -> &Array1<T> {
        &self.target
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn categorical_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| matches!(c.kind, ColumnKind::Categorical { .. }))
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Rows at `indices`, in that order. Indices may repeat.
    pub fn select(&self, indices: &[usize]) -> Dataset<T> {
        Dataset {
            features: self.features.select(Axis(0), indices),
            target: self.target.select(Axis(0), indices),
            columns: self.columns.clone(),
            target_name: self.target_name.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            features: self.features.mapv(|v| U::lit(v.as_f64())),
            target: self.target.mapv(|v| U::lit(v.as_f64())),
            columns: self.columns.clone(),
            target_name: self.target_name.clone(),
        }
    }

    /// Writes the dataset as CSV (features then target). Categorical codes are written as levels.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        let mut header: Vec<&str> = self.feature_names();
        header.push(&self.target_name);
        w.write_record(&header).map_err(csv_err)?;
        for (row, y) in self.features.axis_iter(Axis(0)).zip(self.target.iter()) {
            let mut rec: Vec<String> = row
                .iter()
                .zip(&self.columns)
                .map(|(v, c)| match &c.kind {
                    ColumnKind::Numeric => v.to_string(),
                    ColumnKind::Categorical { levels } => levels[v.to_usize().unwrap_or(0)].clone(),
                })
                .collect();
            rec.push(y.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))
    }
}

/// Reads a CSV with a header row. Columns whose cells all fail to parse as numbers become
/// categorical; a column mixing numbers and text is an error. Row numbers in errors are
/// 1-based data rows (the header is not counted).
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, target_column: &str) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, target_column)
}

pub fn read_csv<T: Scalar, R: std::io::Read>(reader: R, target_column: &str) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_string()))?;

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(Error::Csv(format!(
                "row {} has {} fields, header has {}",
                cells[0].len() + 1,
                rec.len(),
                header.len()
            )));
        }
        for (col, field) in cells.iter_mut().zip(rec.iter()) {
            col.push(field.trim().to_string());
        }
    }
    let n = cells.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::Empty("CSV has no data rows"));
    }

    let mut features: Vec<Vec<T>> = Vec::new();
    let mut columns = Vec::new();
    let mut target = Vec::new();
    for (j, (name, raw)) in header.iter().zip(&cells).enumerate() {
        let parsed: Vec<Option<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
        let numeric_count = parsed.iter().filter(|p| p.is_some()).count();
        if j == target_idx || numeric_count > 0 {
            if let Some(row) = parsed.iter().position(Option::is_none) {
                return Err(Error::ParseCell {
                    row: row + 1,
                    column: name.clone(),
                    value: raw[row].clone(),
                });
            }
            let values: Vec<T> = parsed.into_iter().map(|v| T::lit(v.unwrap())).collect();
            if j == target_idx {
                target = values;
            } else {
                features.push(values);
                columns.push(Column {
                    name: name.clone(),
                    kind: ColumnKind::Numeric,
                });
            }
        } else {
            let levels: Vec<String> = raw.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            let code: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            features.push(raw.iter().map(|s| T::lit(code[s.as_str()] as f64)).collect());
            columns.push(Column {
                name: name.clone(),
                kind: ColumnKind::Categorical { levels },
            });
        }
    }

    let d = features.len();
    let matrix = Array2::from_shape_fn((n, d), |(i, j)| features[j][i]);
    Dataset::with_columns(matrix, Array1::from(target), columns, target_column.to_string()).map_err(|e| match e {
        Error::NonFinite { rows } => Error::NonFinite {
            rows: rows.into_iter().map(|r| r + 1).collect(),
        },
        other => other,
    })
}

/// Expands each named categorical column with `m` levels into `m` indicator columns named
/// `<col>=<level>`, in place and in level order.
pub fn one_hot_encode<T: Scalar>(dataset: &Dataset<T>, categorical_columns: &[&str]) -> Result<Dataset<T>> {
    for name in categorical_columns {
        let col = dataset
            .columns
            .iter()
            .find(|c| c.name == *name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        if !matches!(col.kind, ColumnKind::Categorical { .. }) {
            return Err(Error::NotCategorical(name.to_string()));
        }
    }

    let n = dataset.n();
    let mut out_cols: Vec<Array1<T>> = Vec::new();
    let mut out_meta = Vec::new();
    for (j, col) in dataset.columns.iter().enumerate() {
        let values = dataset.features.column(j);
        match &col.kind {
            ColumnKind::Categorical { levels } if categorical_columns.contains(&col.name.as_str()) => {
                for (code, level) in levels.iter().enumerate() {
                    let code = T::lit(code as f64);
                    out_cols.push(values.mapv(|v| if v == code { T::one() } else { T::zero() }));
                    out_meta.push(Column {
                        name: format!("{}={}", col.name, level),
                        kind: ColumnKind::Numeric,
                    });
                }
            }
            _ => {
                out_cols.push(values.to_owned());
                out_meta.push(col.clone());
            }
        }
    }
    let features = Array2::from_shape_fn((n, out_cols.len()), |(i, j)| out_cols[j][i]);
    Ok(Dataset {
        features,
        target: dataset.target.clone(),
        columns: out_meta,
        target_name: dataset.target_name.clone(),
    })
}

/// One-hot encodes every categorical column.
pub fn encode_all<T: Scalar>(dataset: &Dataset<T>) -> Result<Dataset<T>> {
    let cats: Vec<String> = dataset.categorical_columns().into_iter().map(String::from).collect();
    let refs: Vec<&str> = cats.iter().map(String::as_str).collect();
    one_hot_encode(dataset, &refs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Seeded shuffle of `0..n` cut into train / calibration / test. Train and calibration get
/// `floor(n * f)` rows; test gets the remainder. A part may only be empty when its fraction is 0.
pub fn split(n: usize, fractions: [f64; 3], seed: u64) -> Result<SplitIndices> {
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || fractions[0] <= 0.0 || fractions[1] <= 0.0 {
        return Err(Error::invalid(format!(
            "train and calibration fractions must be positive and test non-negative, got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions sum to {total}, not 1")));
    }
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 rows to split, got {n}")));
    }
    let size = |f: f64| (n as f64 * f + 1e-9).floor() as usize;
    let n_train = size(fractions[0]);
    let n_cal = size(fractions[1]);
    let n_test = n - n_train - n_cal;
    if n_train == 0 || n_cal == 0 || (fractions[2] > 0.0 && n_test == 0) {
        return Err(Error::invalid(format!(
            "{n} rows are too few for fractions {fractions:?}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let test = idx.split_off(n_train + n_cal);
    let calibration = idx.split_off(n_train);
    Ok(SplitIndices {
        train: idx,
        calibration,
        test,
        seed,
    })
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn bootstrap_indices(n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Empty("bootstrap of zero rows"));
    }
    let mut rng = seed::rng(seed);
    Ok((0..n).map(|_| rng.random_range(0..n)).collect())
}
