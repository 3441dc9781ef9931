//! `ECCE` binary embedding files.
//!
//! Layout, little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `ECCE` |
//! | 2     | version (1) |
//! | 1     | dtype (1 = f32) |
//! | 4     | rows |
//! | 4     | cols |
//! | 4     | mask_len (= rows) |
//! | mask_len | mask, one byte per row, 0 or 1 |
//! | rows*cols*4 | row-major f32 payload |

use std::fs;
use std::path::Path;

use super::{EmbeddingError, EmbeddingMatrix};

pub const MAGIC: &[u8; 4] = b"ECCE";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4 + 4;

/// Header fields of an `ECCE` file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u16,
    pub dtype: u8,
    pub rows: u32,
    pub cols: u32,
    pub mask_len: u32,
}

pub fn file_len(rows: usize, cols: usize) -> usize {
    HEADER_LEN + rows + rows * cols * 4
}

pub fn encode(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(file_len(m.rows(), m.cols()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend(m.mask().iter().map(|&b| b as u8));
    for x in m.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode_header(bytes: &[u8]) -> Result<Header, EmbeddingError> {
    if bytes.len() < HEADER_LEN {
        return Err(EmbeddingError::Format(format!(
            "file too short for header ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(EmbeddingError::BadMagic([
            bytes[0], bytes[1], bytes[2], bytes[3],
        ]));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(EmbeddingError::Version(version));
    }
    let dtype = bytes[6];
    if dtype != DTYPE_F32 {
        return Err(EmbeddingError::Format(format!("unsupported dtype {dtype}")));
    }
    Ok(Header {
        version,
        dtype,
        rows: u32_at(bytes, 7),
        cols: u32_at(bytes, 11),
        mask_len: u32_at(bytes, 15),
    })
}

pub fn decode(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbeddingError> {
    let h = decode_header(bytes)?;
    if h.mask_len != h.rows {
        return Err(EmbeddingError::Format(format!(
            "mask_len {} does not match rows {}",
            h.mask_len, h.rows
        )));
    }
    let (rows, cols) = (h.rows as usize, h.cols as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN + rows))
        .ok_or_else(|| EmbeddingError::Format("header dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(EmbeddingError::SizeMismatch {
            expected,
            got: bytes.len(),
        });
    }
    let mask_bytes = &bytes[HEADER_LEN..HEADER_LEN + rows];
    let mut mask = Vec::with_capacity(rows);
    for (r, &b) in mask_bytes.iter().enumerate() {
        match b {
            0 => mask.push(false),
            1 => mask.push(true),
            other => {
                return Err(EmbeddingError::Format(format!(
                    "mask byte {other} at row {r}"
                )))
            }
        }
    }
    let data = bytes[HEADER_LEN + rows..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(rows, cols, data, mask)
}

pub fn write_embedding_file(m: &EmbeddingMatrix, path: &Path) -> Result<(), EmbeddingError> {
    let tmp = path.with_extension("ecce.tmp");
    fs::write(&tmp, encode(m)).map_err(|e| EmbeddingError::io(path, e))?;
    fs::rename(&tmp, path).map_err(|e| EmbeddingError::io(path, e))
}

pub fn read_embedding_file(path: &Path) -> Result<EmbeddingMatrix, EmbeddingError> {
    let bytes = fs::read(path).map_err(|e| EmbeddingError::io(path, e))?;
    decode(&bytes)
}
