//! Plain-text matrix files.
//!
//! The first line is `# rows=<R> cols=<C>`, optionally followed by
//! `name=<label>`; then one comma-separated line per row (one row per frame).
//! Values use Rust's shortest round-trip float formatting.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub fn format_matrix(m: ArrayView2<'_, f64>, name: Option<&str>) -> String {
    let (rows, cols) = m.dim();
    let mut out = format!("# rows={rows} cols={cols}");
    if let Some(name) = name {
        write!(out, " name={name}").unwrap();
    }
    out.push('\n');
    for row in m.rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: impl AsRef<Path>, m: ArrayView2<'_, f64>, name: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_matrix(m, name)).map_err(|e| Error::io(path, e))
}

pub fn parse_matrix(text: &str) -> Result<Array2<f64>> {
    let bad = |msg: String| Error::Config(format!("matrix file: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty".into()))?;
    let header = header.strip_prefix('#').ok_or_else(|| bad("missing header".into()))?;
    let mut rows = None;
    let mut cols = None;
    for tok in header.split_whitespace() {
        if let Some(v) = tok.strip_prefix("rows=") {
            rows = v.parse::<usize>().ok();
        } else if let Some(v) = tok.strip_prefix("cols=") {
            cols = v.parse::<usize>().ok();
        }
    }
    let (rows, cols) = rows.zip(cols).ok_or_else(|| bad("header lacks rows/cols".into()))?;
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let before = data.len();
        for v in line.split(',') {
            data.push(v.trim().parse::<f64>().map_err(|e| bad(format!("row {i}: {e}")))?);
        }
        if data.len() - before != cols {
            return Err(bad(format!(
                "row {i} has {} values, expected {cols}",
                data.len() - before
            )));
        }
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|_| bad("row count does not match header".into()))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text)
}

/// Magnitude in dB, floored at -200 dB.
pub fn magnitude_db(x: &Array2<Complex64>) -> Array2<f64> {
    x.mapv(|v| 20.0 * v.norm().max(1e-10).log10())
}
