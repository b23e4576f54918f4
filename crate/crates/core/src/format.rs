//! Binary matrix files and clustering JSONL.
//!
//! Matrix layout: magic `EDTM`, version `u16`, rows `u64`, cols `u64`, then
//! `rows * cols` row-major `f32`, all little-endian.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EDTM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 8;

pub fn encode_matrix(values: &Array2<f32>) -> Vec<u8> {
    let (rows, cols) = values.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * rows * cols);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("missing EDTM magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| bad(format!("shape {rows}x{cols} is too large")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(bad(format!(
            "{rows}x{cols} needs {expected} data bytes, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows as usize, cols as usize), data).map_err(|e| bad(e.to_string()))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f32>> {
    decode_matrix(&std::fs::read(path)?, path)
}

pub fn write_matrix(path: &Path, values: &Array2<f32>) -> Result<()> {
    write_atomic(path, &encode_matrix(values))
}

/// Narrow an `f64` matrix (a plan or cost) to the file precision.
pub fn write_matrix_f64(path: &Path, values: &Array2<f64>) -> Result<()> {
    write_matrix(path, &values.mapv(|v| v as f32))
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// One line of a clustering file. `label: null` marks an unassigned document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterRecord {
    pub id: String,
    pub label: Option<String>,
}

pub fn encode_clustering(records: &[ClusterRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_clustering(text: &str) -> Result<Vec<ClusterRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                what: "clustering",
                line: idx + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_clustering(path: &Path) -> Result<Vec<ClusterRecord>> {
    parse_clustering(&std::fs::read_to_string(path)?)
}

pub fn write_clustering(path: &Path, records: &[ClusterRecord]) -> Result<()> {
    write_atomic(path, encode_clustering(records)?.as_bytes())
}
