//! Binary float32 matrix files shared by the retrieval and metrics
//! modules: little-endian header `magic "VPFM", u32 dim, u32 count`
//! followed by `count * dim` row-major f32 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

const MAGIC: &[u8; 4] = b"VPFM";

#[derive(Debug, Error)]
pub enum MatrixIoError {
    #[error("missing file: {0}")]
    Missing(String),
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error("bad matrix file {0}: {1}")]
    Format(String, String),
}

/// Row-major matrix of f32 features.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixF32 {
    pub dim: usize,
    pub rows: Vec<Vec<f32>>,
}

impl MatrixF32 {
    pub fn new(dim: usize, rows: Vec<Vec<f32>>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == dim));
        Self { dim, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn load_matrix(path: &Path) -> Result<MatrixF32, MatrixIoError> {
    if !path.exists() {
        return Err(MatrixIoError::Missing(path.display().to_string()));
    }
    let err_io = |e: std::io::Error| MatrixIoError::Io(path.display().to_string(), e.to_string());
    let mut reader = BufReader::new(File::open(path).map_err(err_io)?);
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(err_io)?;
    if &magic != MAGIC {
        return Err(MatrixIoError::Format(
            path.display().to_string(),
            "bad magic".to_string(),
        ));
    }
    let mut u32buf = [0u8; 4];
    reader.read_exact(&mut u32buf).map_err(err_io)?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    reader.read_exact(&mut u32buf).map_err(err_io)?;
    let count = u32::from_le_bytes(u32buf) as usize;
    if dim == 0 {
        return Err(MatrixIoError::Format(
            path.display().to_string(),
            "zero dimension".to_string(),
        ));
    }
    let mut raw = vec![0u8; dim * count * 4];
    reader.read_exact(&mut raw).map_err(err_io)?;
    let mut rows = Vec::with_capacity(count);
    for r in 0..count {
        let mut row = Vec::with_capacity(dim);
        for c in 0..dim {
            let off = (r * dim + c) * 4;
            row.push(f32::from_le_bytes([
                raw[off],
                raw[off + 1],
                raw[off + 2],
                raw[off + 3],
            ]));
        }
        rows.push(row);
    }
    Ok(MatrixF32 { dim, rows })
}

pub fn save_matrix(path: &Path, matrix: &MatrixF32) -> Result<(), MatrixIoError> {
    let err_io = |e: std::io::Error| MatrixIoError::Io(path.display().to_string(), e.to_string());
    let mut writer = BufWriter::new(File::create(path).map_err(err_io)?);
    writer.write_all(MAGIC).map_err(err_io)?;
    writer
        .write_all(&(matrix.dim as u32).to_le_bytes())
        .map_err(err_io)?;
    writer
        .write_all(&(matrix.rows.len() as u32).to_le_bytes())
        .map_err(err_io)?;
    for row in &matrix.rows {
        for v in row {
            writer.write_all(&v.to_le_bytes()).map_err(err_io)?;
        }
    }
    Ok(())
}
