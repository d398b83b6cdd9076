//! Binary feature matrix: `BNSF` magic, u32 version, u64 rows, u64 cols, then
//! row-major little-endian f32 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: [u8; 4] = *b"BNSF";
pub const MATRIX_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(cols: usize) -> Self {
        FeatureMatrix {
            cols,
            data: Vec::new(),
        }
    }

    pub fn from_rows(cols: usize, rows: impl IntoIterator<Item = Vec<f32>>) -> Result<Self> {
        let mut m = FeatureMatrix::new(cols);
        for r in rows {
            m.push_row(&r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::shape(self.cols, row.len()));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.cols).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `f64` copy of the given rows, restricted to `columns` in order.
    pub fn select(&self, rows: &[usize], columns: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((rows.len(), columns.len()), |(r, c)| {
            f64::from(self.data[rows[r] * self.cols + columns[c]])
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&MATRIX_MAGIC)?;
        w.write_all(&MATRIX_VERSION.to_le_bytes())?;
        w.write_all(&(self.rows() as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::format("feature matrix", format!("short header: {e}")))?;
        if header[..4] != MATRIX_MAGIC {
            return Err(Error::format("feature matrix", "missing BNSF magic"));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != MATRIX_VERSION {
            return Err(Error::VersionMismatch {
                what: "feature matrix",
                found: version.to_string(),
                expected: MATRIX_VERSION.to_string(),
            });
        }
        let rows = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let cols = u64::from_le_bytes(header[16..24].try_into().unwrap());
        let len = rows
            .checked_mul(cols)
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| Error::format("feature matrix", "dimensions overflow"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::format("feature matrix", e.to_string()))?;
        if bytes.len() != len * 4 {
            return Err(Error::format(
                "feature matrix",
                format!("{rows}x{cols} needs {} data bytes, found {}", len * 4, bytes.len()),
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(FeatureMatrix {
            cols: cols as usize,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}
