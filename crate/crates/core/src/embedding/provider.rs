use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{
    read_embedding_file, write_embedding_file, EmbeddingError, EmbeddingMatrix, TextEmbedding,
    AUDIO_DIM, SENTENCE_DIM, TEXT_DIM,
};
use crate::http::{HttpError, JsonPoster, RemoteConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    AudioFrames,
    Sentences,
    Text,
}

impl Modality {
    pub fn dim(self) -> usize {
        match self {
            Modality::AudioFrames => AUDIO_DIM,
            Modality::Sentences => SENTENCE_DIM,
            Modality::Text => TEXT_DIM,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no {modality:?} embedding stored for key {key}")]
    Missing { modality: Modality, key: String },
    #[error("{0:?} embeddings are not supported by this provider")]
    Unsupported(Modality),
    #[error("{modality:?} embedding has dim {got}, expected {expected}")]
    Dimension {
        modality: Modality,
        expected: usize,
        got: usize,
    },
    #[error("provider index {path}: {message}")]
    Index { path: String, message: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Http(#[from] HttpError),
}

/// Source of audio-frame, sentence and whole-text vectors. Implementations
/// are deterministic for a fixed configuration and never mutate after
/// construction.
pub trait EmbeddingProvider: Send + Sync {
    fn embed_audio_frames(&self, clips: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
    fn embed_sentences(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
    fn embed_text(&self, text: &str) -> Result<TextEmbedding, ProviderError>;
}

/// Hex SHA-256 of the input; the lookup key used by [`FileProvider`].
pub fn content_key(input: &str) -> String {
    Sha256::digest(input.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Offline provider: each input is hashed together with the seed and the
/// modality, the digest seeds a PRNG, and the drawn vector is scaled to unit
/// length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubProvider {
    seed: u64,
}

impl StubProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn vector(&self, modality: Modality, input: &[u8]) -> Vec<f32> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(format!("{modality:?}").as_bytes());
        h.update([0u8]);
        h.update(input);
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let v: Vec<f64> = (0..modality.dim())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| (x / norm) as f32).collect()
    }
}

impl EmbeddingProvider for StubProvider {
    fn embed_audio_frames(&self, clips: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(clips
            .iter()
            .map(|c| self.vector(Modality::AudioFrames, c.as_bytes()))
            .collect())
    }

    fn embed_sentences(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(texts
            .iter()
            .map(|t| self.vector(Modality::Sentences, t.as_bytes()))
            .collect())
    }

    fn embed_text(&self, text: &str) -> Result<TextEmbedding, ProviderError> {
        Ok(TextEmbedding::new(
            self.vector(Modality::Text, text.as_bytes()),
        )?)
    }
}

/// One line of a provider directory's `index.jsonl`: row `i` of `file` is the
/// embedding of the input whose [`content_key`] is `keys[i]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexEntry {
    pub kind: Modality,
    pub file: String,
    pub keys: Vec<String>,
}

pub const INDEX_FILE: &str = "index.jsonl";

/// Provider backed by `ECCE` exports (for instance those written by the
/// pretrained-model adapter), looked up by content hash.
#[derive(Debug, Default)]
pub struct FileProvider {
    vectors: HashMap<(Modality, String), Vec<f32>>,
}

impl FileProvider {
    pub fn open(dir: &Path) -> Result<Self, ProviderError> {
        let index_path = dir.join(INDEX_FILE);
        let text =
            fs::read_to_string(&index_path).map_err(|e| EmbeddingError::io(&index_path, e))?;
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: IndexEntry =
                serde_json::from_str(line).map_err(|e| ProviderError::Index {
                    path: index_path.display().to_string(),
                    message: format!("line {}: {e}", i + 1),
                })?;
            let m = read_embedding_file(&dir.join(&entry.file))?;
            if m.cols() != entry.kind.dim() {
                return Err(ProviderError::Dimension {
                    modality: entry.kind,
                    expected: entry.kind.dim(),
                    got: m.cols(),
                });
            }
            if entry.keys.len() > m.valid_rows() {
                return Err(ProviderError::Index {
                    path: index_path.display().to_string(),
                    message: format!(
                        "{} keys for {} valid rows in {}",
                        entry.keys.len(),
                        m.valid_rows(),
                        entry.file
                    ),
                });
            }
            for (key, row) in entry.keys.into_iter().zip(m.iter_valid()) {
                vectors.insert((entry.kind, key), row.to_vec());
            }
        }
        Ok(Self { vectors })
    }

    fn lookup(&self, modality: Modality, input: &str) -> Result<Vec<f32>, ProviderError> {
        let key = content_key(input);
        self.vectors
            .get(&(modality, key.clone()))
            .cloned()
            .ok_or(ProviderError::Missing { modality, key })
    }
}

impl EmbeddingProvider for FileProvider {
    fn embed_audio_frames(&self, clips: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        clips
            .iter()
            .map(|c| self.lookup(Modality::AudioFrames, c))
            .collect()
    }

    fn embed_sentences(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        texts
            .iter()
            .map(|t| self.lookup(Modality::Sentences, t))
            .collect()
    }

    fn embed_text(&self, text: &str) -> Result<TextEmbedding, ProviderError> {
        Ok(TextEmbedding::new(self.lookup(Modality::Text, text)?)?)
    }
}

/// Writes a directory that [`FileProvider::open`] can read.
pub struct FileProviderWriter {
    dir: PathBuf,
    entries: Vec<IndexEntry>,
}

impl FileProviderWriter {
    pub fn new(dir: &Path) -> Result<Self, ProviderError> {
        fs::create_dir_all(dir).map_err(|e| EmbeddingError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    /// Store `vectors[i]` as the embedding of `inputs[i]`.
    pub fn add(
        &mut self,
        kind: Modality,
        name: &str,
        inputs: &[String],
        vectors: &[Vec<f32>],
    ) -> Result<(), ProviderError> {
        let rows = vectors.len();
        let matrix = EmbeddingMatrix::new(rows, kind.dim(), vectors.concat(), vec![true; rows])?;
        let file = format!("{name}.ecce");
        write_embedding_file(&matrix, &self.dir.join(&file))?;
        self.entries.push(IndexEntry {
            kind,
            file,
            keys: inputs.iter().map(|s| content_key(s)).collect(),
        });
        Ok(())
    }

    pub fn finish(self) -> Result<(), ProviderError> {
        let path = self.dir.join(INDEX_FILE);
        let body: String = self
            .entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("index entry serializes") + "\n")
            .collect();
        fs::write(&path, body).map_err(|e| EmbeddingError::io(&path, e).into())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
    dimensions: usize,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

/// OpenAI-compatible `/embeddings` client. Sentence and whole-text vectors
/// are requested at their contract dimension; audio is not available.
pub struct RemoteEmbeddingProvider {
    poster: JsonPoster,
}

impl RemoteEmbeddingProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        Ok(Self {
            poster: JsonPoster::new(config)?,
        })
    }

    fn request(
        &self,
        modality: Modality,
        inputs: &[String],
    ) -> Result<Vec<Vec<f32>>, ProviderError> {
        let dim = modality.dim();
        let resp: EmbeddingResponse = self.poster.post(
            "embeddings",
            &EmbeddingRequest {
                model: &self.poster.config().model,
                input: inputs,
                dimensions: dim,
            },
        )?;
        let mut out = vec![None; inputs.len()];
        for d in resp.data {
            if d.embedding.len() != dim {
                return Err(ProviderError::Dimension {
                    modality,
                    expected: dim,
                    got: d.embedding.len(),
                });
            }
            if let Some(slot) = out.get_mut(d.index) {
                *slot = Some(d.embedding);
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| ProviderError::Missing {
                    modality,
                    key: format!("response index {i}"),
                })
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbeddingProvider {
    fn embed_audio_frames(&self, _clips: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Err(ProviderError::Unsupported(Modality::AudioFrames))
    }

    fn embed_sentences(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.request(Modality::Sentences, texts)
    }

    fn embed_text(&self, text: &str) -> Result<TextEmbedding, ProviderError> {
        let v = self
            .request(Modality::Text, &[text.to_string()])?
            .pop()
            .expect("one input yields one vector");
        Ok(TextEmbedding::new(v)?)
    }
}
