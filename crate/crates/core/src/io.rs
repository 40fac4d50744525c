//! Dense CSV import and export for matrices and vectors.
//!
//! Matrices are written row-major with a header row of column indices.
//! Vectors are a single column headed `value`. Floats carry 17 significant
//! digits so a write/read cycle is bit-exact.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Format a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn parse_f64(s: &str, row: usize, col: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("row {row}, column {col}: `{s}`: {e}")))
}

pub fn write_matrix<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((0..m.ncols()).map(|j| j.to_string()))?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| fmt_f64(m[(i, j)])))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let cols = r.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::Parse(format!(
                "row {i} has {} fields, expected {cols}",
                rec.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            data.push(parse_f64(field, i, j)?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_vector<W: Write>(out: W, v: &DVector<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value"])?;
    for x in v.iter() {
        w.write_record([fmt_f64(*x)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector<R: Read>(input: R) -> Result<DVector<f64>> {
    let m = read_matrix(input)?;
    if m.ncols() != 1 {
        return Err(Error::Parse(format!(
            "expected a single column, found {}",
            m.ncols()
        )));
    }
    Ok(m.column(0).into_owned())
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_matrix(File::create(path)?, m)
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(File::open(path)?)
}

pub fn save_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_vector(File::create(path)?, v)
}

pub fn load_vector(path: &Path) -> Result<DVector<f64>> {
    read_vector(File::open(path)?)
}
