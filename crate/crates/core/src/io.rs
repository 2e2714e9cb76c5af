//! Dataset files: CSV (one observation per row) and a compact binary format.
//!
//! Binary layout: the 8-byte magic `SSDATA01`, then `D` and `N` as
//! little-endian `u64`, then `N·D` little-endian `f64` values row-major
//! (observation by observation).

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Dataset;

pub const BINARY_MAGIC: &[u8; 8] = b"SSDATA01";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses a numeric CSV into a row matrix. Blank lines and lines starting
/// with `#` are skipped; a first line that does not parse is taken as a
/// header.
pub fn parse_csv_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        return Err(Error::Parse(format!(
                            "line {}: expected {} fields, got {}",
                            i + 1,
                            first.len(),
                            row.len()
                        )));
                    }
                }
                rows.push(row);
            }
            Err(_) if rows.is_empty() => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse("no numeric rows".into()));
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

pub fn read_csv_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_csv_matrix(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
}

pub fn write_csv_matrix(path: &Path, rows: &DMatrix<f64>) -> Result<()> {
    let mut out = Vec::new();
    for r in 0..rows.nrows() {
        let line: Vec<String> = rows.row(r).iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(",")).expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    Dataset::from_rows(&read_csv_matrix(path)?)
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    write_csv_matrix(path, &data.to_rows())
}

pub fn encode_dataset(data: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * data.n() * data.d());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(data.d() as u64).to_le_bytes());
    out.extend_from_slice(&(data.n() as u64).to_le_bytes());
    for v in data.columns().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 24 || &bytes[..8] != BINARY_MAGIC {
        return Err(Error::Parse("not a binary dataset file".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes")) as usize;
    let (d, n) = (word(8), word(16));
    let expected = d
        .checked_mul(n)
        .and_then(|k| k.checked_mul(8))
        .and_then(|k| k.checked_add(24))
        .ok_or_else(|| Error::Parse("dataset header overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Parse(format!("binary dataset: expected {expected} bytes, got {}", bytes.len())));
    }
    let values = bytes[24..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    // column-major D×N storage is the same byte order as row-major N×D
    Dataset::from_columns(DMatrix::from_iterator(d, n, values))
}

pub fn read_dataset_binary(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path).map_err(|e| io_err(path, e))?)
}

pub fn write_dataset_binary(path: &Path, data: &Dataset) -> Result<()> {
    fs::write(path, encode_dataset(data)).map_err(|e| io_err(path, e))
}

/// Reads a dataset, choosing the format by extension (`.csv` or binary).
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_dataset_csv(path)
    } else {
        read_dataset_binary(path)
    }
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_dataset_csv(path, data)
    } else {
        write_dataset_binary(path, data)
    }
}

/// Loads a source-signal CSV as an `H × T` matrix of sources. Files with
/// more rows than columns are taken to hold one source per column.
pub fn read_sources_csv(path: &Path) -> Result<DMatrix<f64>> {
    let m = read_csv_matrix(path)?;
    Ok(if m.nrows() > m.ncols() { m.transpose() } else { m })
}
