//! CSV exchange of uncertainty components and intervals, for calibrating predictions made
//! by outside models.
//!
//! Component files carry the header `y,f_hat,ale_lo,ale_hi,epi_lo,epi_hi`; `y` may be absent
//! for test rows. Interval files carry `lower,upper`.

use std::io::{Read, Write};

use ndarray::Array1;

use crate::clear::UncertaintyComponents;
use crate::error::{Error, Result};
use crate::interval::IntervalSet;
use crate::num::Scalar;

const WIDTH_COLUMNS: [&str; 5] = ["f_hat", "ale_lo", "ale_hi", "epi_lo", "epi_hi"];

/// Reads a components table. With `require_y` a missing `y` column is an error; otherwise the
/// column is read when present. Row numbers in errors are 1-based data rows.
pub fn read_components<T: Scalar, R: Read>(reader: R, require_y: bool) -> Result<UncertaintyComponents<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(WIDTH_COLUMNS) {
        *slot = find(name).ok_or_else(|| Error::MissingColumn(name.into()))?;
    }
    let y_idx = find("y");
    if require_y && y_idx.is_none() {
        return Err(Error::MissingColumn("y".into()));
    }
    let mut cols: Vec<Vec<T>> = vec![Vec::new(); 5];
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let cell = |i: usize, name: &str| -> Result<T> {
            let raw = rec.get(i).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| Error::Schema {
                row,
                message: format!("column {name}: cannot parse {raw:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Schema {
                    row,
                    message: format!("column {name}: value {raw} is not finite"),
                });
            }
            Ok(T::lit(v))
        };
        for (k, (&i, name)) in idx.iter().zip(WIDTH_COLUMNS).enumerate() {
            let v = cell(i, name)?;
            if k > 0 && v < T::zero() {
                return Err(Error::Schema {
                    row,
                    message: format!("column {name}: negative width {v}"),
                });
            }
            cols[k].push(v);
        }
        if let Some(i) = y_idx {
            y.push(cell(i, "y")?);
        }
    }
    if cols[0].is_empty() {
        return Err(Error::Empty("components file"));
    }
    let mut it = cols.into_iter().map(Array1::from);
    let mut next = || it.next().unwrap();
    UncertaintyComponents::new(next(), next(), next(), next(), next(), y_idx.map(|_| Array1::from(y)))
}

pub fn write_components<T: Scalar, W: Write>(writer: W, c: &UncertaintyComponents<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    let mut header: Vec<&str> = Vec::new();
    if c.y.is_some() {
        header.push("y");
    }
    header.extend(WIDTH_COLUMNS);
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..c.len() {
        let mut rec: Vec<String> = Vec::with_capacity(6);
        if let Some(y) = &c.y {
            rec.push(y[i].to_string());
        }
        for v in [c.f_hat[i], c.ale_lo[i], c.ale_hi[i], c.epi_lo[i], c.epi_hi[i]] {
            rec.push(v.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn write_intervals<T: Scalar, W: Write>(writer: W, intervals: &IntervalSet<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(["lower", "upper"]).map_err(csv_err)?;
    for (l, u) in intervals.lower.iter().zip(&intervals.upper) {
        w.write_record([l.to_string(), u.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn read_intervals<T: Scalar, R: Read>(reader: R) -> Result<IntervalSet<T>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let parse = |i: usize| -> Result<T> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse::<f64>().map(T::lit).map_err(|_| Error::Schema {
                row: r + 1,
                message: format!("cannot parse {raw:?} as a number"),
            })
        };
        lower.push(parse(0)?);
        upper.push(parse(1)?);
    }
    IntervalSet::new(lower.into(), upper.into())
}
