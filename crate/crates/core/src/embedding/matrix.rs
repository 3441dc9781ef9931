use serde::{Deserialize, Serialize};

use super::EmbeddingError;

/// Rows reserved per call for sentence and audio sequences.
pub const SEQ_CAPACITY: usize = 520;
pub const AUDIO_DIM: usize = 512;
pub const SENTENCE_DIM: usize = 768;
pub const TEXT_DIM: usize = 1024;

/// Row-padded matrix with a validity mask. Rows whose mask bit is false are
/// exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    mask: Vec<bool>,
}

impl EmbeddingMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        data: Vec<f32>,
        mask: Vec<bool>,
    ) -> Result<Self, EmbeddingError> {
        if data.len() != rows * cols {
            return Err(EmbeddingError::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if mask.len() != rows {
            return Err(EmbeddingError::Shape(format!(
                "mask length {} for {rows} rows",
                mask.len()
            )));
        }
        for (r, &valid) in mask.iter().enumerate() {
            if !valid && data[r * cols..(r + 1) * cols].iter().any(|&x| x != 0.0) {
                return Err(EmbeddingError::Invariant(format!(
                    "masked row {r} is not zero"
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            data,
            mask,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            mask: vec![false; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn valid_rows(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Iterate over the unmasked rows in order.
    pub fn iter_valid(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(r, _)| self.row(r))
    }
}

/// Result of [`pad_to_capacity`]; `truncated` counts dropped trailing rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Padded {
    pub matrix: EmbeddingMatrix,
    pub truncated: usize,
}

/// Stack `vectors` into a `capacity`-row matrix, zero-padding the tail.
/// Inputs longer than `capacity` keep their first `capacity` rows.
pub fn pad_to_capacity(vectors: &[Vec<f32>], capacity: usize) -> Result<Padded, EmbeddingError> {
    let first = vectors.first().ok_or(EmbeddingError::Empty)?;
    let cols = first.len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != cols) {
        return Err(EmbeddingError::Shape(format!(
            "ragged input: {} vs {cols} columns",
            bad.len()
        )));
    }
    let kept = vectors.len().min(capacity);
    let truncated = vectors.len() - kept;
    if truncated > 0 {
        log::warn!(
            "truncating {} rows to capacity {capacity} ({truncated} dropped)",
            vectors.len()
        );
    }
    let mut data = vec![0.0f32; capacity * cols];
    for (r, v) in vectors.iter().take(kept).enumerate() {
        data[r * cols..(r + 1) * cols].copy_from_slice(v);
    }
    let mask = (0..capacity).map(|r| r < kept).collect();
    Ok(Padded {
        matrix: EmbeddingMatrix {
            rows: capacity,
            cols,
            data,
            mask,
        },
        truncated,
    })
}

/// A whole-text embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedding {
    data: Vec<f32>,
}

impl TextEmbedding {
    pub fn new(data: Vec<f32>) -> Result<Self, EmbeddingError> {
        if data.len() != TEXT_DIM {
            return Err(EmbeddingError::Dimension {
                expected: TEXT_DIM,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::Invariant("non-finite entry".into()));
        }
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// One-row matrix view used by the file format.
    pub fn to_matrix(&self) -> EmbeddingMatrix {
        EmbeddingMatrix {
            rows: 1,
            cols: self.data.len(),
            data: self.data.clone(),
            mask: vec![true],
        }
    }

    pub fn from_matrix(m: &EmbeddingMatrix) -> Result<Self, EmbeddingError> {
        if m.rows() != 1 || m.mask() != [true] {
            return Err(EmbeddingError::Shape(format!(
                "text embedding needs a single valid row, got {} rows",
                m.rows()
            )));
        }
        Self::new(m.data().to_vec())
    }
}
