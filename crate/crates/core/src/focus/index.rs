use std::cmp::Ordering;

use super::FocusError;
use crate::embedding::EmbeddingProvider;
use crate::llm::Chunk;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk_index: usize,
    pub vector: Vec<f32>,
    pub norm: f64,
}

/// Exact cosine-similarity index over one call's chunks. Immutable once
/// built.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    entries: Vec<IndexEntry>,
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}

impl VectorIndex {
    pub fn from_vectors(vectors: Vec<(usize, Vec<f32>)>) -> Result<Self, FocusError> {
        let dim = vectors.first().map(|(_, v)| v.len());
        let entries = vectors
            .into_iter()
            .map(|(chunk_index, vector)| {
                if Some(vector.len()) != dim {
                    return Err(FocusError::Dimension {
                        expected: dim.unwrap_or(0),
                        got: vector.len(),
                    });
                }
                let n = norm(&vector);
                if n <= 0.0 || !n.is_finite() {
                    return Err(FocusError::ZeroNorm { chunk_index });
                }
                Ok(IndexEntry {
                    chunk_index,
                    vector,
                    norm: n,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Embed every chunk with `embed_text`, preserving chunk order.
pub fn build_index(
    provider: &dyn EmbeddingProvider,
    chunks: &[Chunk],
) -> Result<VectorIndex, FocusError> {
    if chunks.is_empty() {
        return Err(FocusError::NoChunks);
    }
    let vectors = chunks
        .iter()
        .map(|c| {
            provider
                .embed_text(&c.text)
                .map(|e| (c.chunk_index, e.as_slice().to_vec()))
                .map_err(|e| FocusError::ChunkEmbedding {
                    chunk_index: c.chunk_index,
                    source: e,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    VectorIndex::from_vectors(vectors)
}

/// Higher score first, then lower chunk index.
fn rank(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// Top-`k` entries by cosine similarity to `query`. `k` is capped at the
/// index size.
pub fn retrieve(
    index: &VectorIndex,
    query: &[f32],
    k: usize,
) -> Result<Vec<(usize, f64)>, FocusError> {
    if k == 0 {
        return Err(FocusError::BadK);
    }
    let qn = norm(query);
    if qn <= 0.0 || !qn.is_finite() {
        return Err(FocusError::ZeroQuery);
    }
    let k = k.min(index.len());
    // bounded insertion: `top` stays sorted and never exceeds k
    let mut top: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for e in &index.entries {
        if e.vector.len() != query.len() {
            return Err(FocusError::Dimension {
                expected: e.vector.len(),
                got: query.len(),
            });
        }
        let cand = (e.chunk_index, dot(&e.vector, query) / (e.norm * qn));
        if top.len() == k && rank(&cand, top.last().unwrap()) != Ordering::Less {
            continue;
        }
        let at = top.partition_point(|x| rank(x, &cand) == Ordering::Less);
        top.insert(at, cand);
        top.truncate(k);
    }
    Ok(top)
}
