//! Dense matrix files.
//!
//! Binary layout: the 8-byte [`MATRIX_MAGIC`], `rows` and `cols` as
//! little-endian `u64`, then `rows * cols` little-endian `f64` in row-major
//! order. CSV files hold one comma-separated row per line.

use super::{ProblemError, Result};
use crate::linalg::Mat;
use std::io::{Read, Write};
use std::path::Path;

pub const MATRIX_MAGIC: [u8; 8] = *b"RVMPMAT1";

pub fn write_matrix_bin(path: &Path, m: &Mat) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * m.len());
    buf.extend_from_slice(&MATRIX_MAGIC);
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix_bin(path: &Path) -> Result<Mat> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || bytes[..8] != MATRIX_MAGIC {
        return Err(ProblemError::Format("missing matrix header".into()));
    }
    let dim = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let (rows, cols) = (dim(8), dim(16));
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .filter(|&c| c == (bytes.len() - 24) as u64)
        .ok_or_else(|| {
            ProblemError::Format(format!(
                "{rows}x{cols} header does not match {} payload bytes",
                bytes.len() - 24
            ))
        })?;
    let data: Vec<f64> = bytes[24..24 + count as usize]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    to_matrix(rows as usize, cols as usize, data)
}

pub fn read_matrix_csv(path: &Path) -> Result<Mat> {
    let text = std::fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| ProblemError::Format(format!("line {}: {e}", lineno + 1)))?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(ProblemError::Format(format!(
                    "line {}: expected {c} fields, got {}",
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
        rows += 1;
    }
    to_matrix(rows, cols.unwrap_or(0), data)
}

/// Reads a CSV file if the extension is `csv`, otherwise the binary format.
pub fn read_matrix(path: &Path) -> Result<Mat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => read_matrix_csv(path),
        _ => read_matrix_bin(path),
    }
}

fn to_matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Mat> {
    if rows == 0 || cols == 0 {
        return Err(ProblemError::Format("empty matrix".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(ProblemError::Format("non-finite entry".into()));
    }
    Mat::from_shape_vec((rows, cols), data).map_err(|e| ProblemError::Format(e.to_string()))
}
