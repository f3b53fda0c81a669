//! FMAT: a small self-describing container for dense `f32` matrices.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"FMAT" | version: u32 = 1 | header_len: u32 | header: UTF-8 JSON | payload
//! ```
//!
//! The header is `{"dtype":"f32","shape":[rows,cols],"order":"row-major","endian":"little"}`
//! and the payload holds exactly `rows * cols` little-endian `f32` values.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FMAT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct Header {
    dtype: String,
    shape: [usize; 2],
    order: String,
    endian: String,
}

/// A row-major `rows x cols` matrix of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::Format(format!(
                "shape [{rows}, {cols}] does not match {} values",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Format(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_f64(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Matrix::new(rows, cols, values.iter().map(|&v| v as f32).collect())
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            dtype: "f32".into(),
            shape: [self.rows, self.cols],
            order: "row-major".into(),
            endian: "little".into(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Format("truncated preamble".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() < header_len {
            return Err(Error::Format("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| Error::Format(format!("header: {e}")))?;
        if header.dtype != "f32" || header.order != "row-major" || header.endian != "little" {
            return Err(Error::Format(format!(
                "unsupported layout dtype={} order={} endian={}",
                header.dtype, header.order, header.endian
            )));
        }
        let [rows, cols] = header.shape;
        let payload = &body[header_len..];
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("shape overflows".into()))?;
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "payload is {} bytes, shape [{rows}, {cols}] requires {expected}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Matrix { rows, cols, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Matrix::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let m = Matrix::new(1, 2, vec![1.0, -2.5]).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"FMAT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let hl = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[12..12 + hl]).unwrap();
        assert_eq!(
            header,
            r#"{"dtype":"f32","shape":[1,2],"order":"row-major","endian":"little"}"#
        );
        assert_eq!(&bytes[12 + hl..12 + hl + 4], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[12 + hl + 4..], &(-2.5f32).to_le_bytes());
    }

    #[test]
    fn rejects_mismatched_payload() {
        let mut bytes = Matrix::zeros(2, 3).to_bytes();
        bytes.pop();
        assert!(matches!(Matrix::from_bytes(&bytes), Err(Error::Format(_))));
        let mut bytes = Matrix::zeros(2, 3).to_bytes();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(Matrix::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut bytes = Matrix::zeros(1, 1).to_bytes();
        bytes[0] = b'X';
        assert!(Matrix::from_bytes(&bytes).is_err());
        let mut bytes = Matrix::zeros(1, 1).to_bytes();
        bytes[4] = 2;
        assert!(Matrix::from_bytes(&bytes).is_err());
    }

    #[test]
    fn rejects_foreign_dtype() {
        let header = br#"{"dtype":"f64","shape":[1,1],"order":"row-major","endian":"little"}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"FMAT");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 8]);
        assert!(Matrix::from_bytes(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..rows * cols).map(|_| f32::from_bits(rng.gen::<u32>() & 0x7f7f_ffff)).collect();
            let m = Matrix::new(rows, cols, data).unwrap();
            let back = Matrix::from_bytes(&m.to_bytes()).unwrap();
            prop_assert_eq!(back.rows, rows);
            prop_assert_eq!(back.cols, cols);
            let a: Vec<u32> = m.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
