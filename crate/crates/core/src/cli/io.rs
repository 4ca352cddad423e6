//! Curve tables on disk.
//!
//! Column layout (default): a header row, then one row per sample point with
//! the argument value first and one column per curve.
//!
//! ```text
//! arg,station1,station2
//! 1,0.25,0.31
//! 2,0.27,0.30
//! ```
//!
//! Row layout is the transpose: the header carries the argument values and
//! each following row is a labelled curve.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Col,
    Row,
}

/// Curves sampled on a shared grid: `values` is `N x J`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub argvals: Vec<f64>,
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Formats a double with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn parse_num(s: &str, path: &Path, line: usize) -> Result<f64> {
    f64::from_str(s.trim()).map_err(|_| {
        Error::InvalidInput(format!("{}:{line}: cannot parse '{s}' as a number", path.display()))
    })
}

pub fn read_curves(path: &Path, orientation: Orientation) -> Result<CurveTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_path(path)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    if rows.len() < 2 {
        return Err(Error::InvalidInput(format!("{}: need a header and at least one data row", path.display())));
    }
    let header = rows.remove(0);
    if header.len() < 2 {
        return Err(Error::InvalidInput(format!("{}: need at least two columns", path.display())));
    }
    let mut labels = Vec::with_capacity(rows.len());
    let mut cells = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        if row.len() != header.len() {
            return Err(Error::InvalidInput(format!(
                "{}:{line}: expected {} fields, found {}",
                path.display(),
                header.len(),
                row.len()
            )));
        }
        labels.push(row[0].clone());
        let vals = row[1..].iter().map(|s| parse_num(s, path, line)).collect::<Result<Vec<f64>>>()?;
        cells.push(vals);
    }
    let (argvals, names, values) = match orientation {
        Orientation::Col => {
            let argvals = labels
                .iter()
                .enumerate()
                .map(|(i, s)| parse_num(s, path, i + 2))
                .collect::<Result<Vec<f64>>>()?;
            let n = header.len() - 1;
            let values = DMatrix::from_fn(n, cells.len(), |i, j| cells[j][i]);
            (argvals, header[1..].to_vec(), values)
        }
        Orientation::Row => {
            let argvals = header[1..].iter().map(|s| parse_num(s, path, 1)).collect::<Result<Vec<f64>>>()?;
            let values = DMatrix::from_fn(cells.len(), argvals.len(), |i, j| cells[i][j]);
            (argvals, labels, values)
        }
    };
    if values.iter().any(|v| !v.is_finite()) || argvals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{}: non-finite value", path.display())));
    }
    Ok(CurveTable { argvals, names, values })
}

pub fn write_curves(path: &Path, table: &CurveTable, orientation: Orientation) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match orientation {
        Orientation::Col => {
            let mut header = vec!["arg".to_string()];
            header.extend(table.names.iter().cloned());
            w.write_record(&header)?;
            for (j, a) in table.argvals.iter().enumerate() {
                let mut rec = vec![fmt_f64(*a)];
                rec.extend((0..table.values.nrows()).map(|i| fmt_f64(table.values[(i, j)])));
                w.write_record(&rec)?;
            }
        }
        Orientation::Row => {
            let mut header = vec!["curve".to_string()];
            header.extend(table.argvals.iter().map(|a| fmt_f64(*a)));
            w.write_record(&header)?;
            for (i, name) in table.names.iter().enumerate() {
                let mut rec = vec![name.clone()];
                rec.extend(table.values.row(i).iter().map(|v| fmt_f64(*v)));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Long-format surface: one `s,t,value` row per grid point.
pub fn write_surface(path: &Path, sgrid: &[f64], tgrid: &[f64], values: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["s", "t", "value"])?;
    for (a, s) in sgrid.iter().enumerate() {
        for (b, t) in tgrid.iter().enumerate() {
            w.write_record([fmt_f64(*s), fmt_f64(*t), fmt_f64(values[(a, b)])])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}
