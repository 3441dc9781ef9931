//! Vector representations: padded sequence matrices, whole-text embeddings,
//! the `ECCE` file format and the embedding providers.

mod format;
mod matrix;
mod provider;

use std::path::Path;

use thiserror::Error;

pub use format::{
    decode, decode_header, encode, file_len, read_embedding_file, write_embedding_file, Header,
    HEADER_LEN,
};
pub use matrix::{
    pad_to_capacity, EmbeddingMatrix, Padded, TextEmbedding, AUDIO_DIM, SENTENCE_DIM, SEQ_CAPACITY,
    TEXT_DIM,
};
pub use provider::{
    content_key, EmbeddingProvider, FileProvider, FileProviderWriter, Modality, ProviderError,
    RemoteEmbeddingProvider, StubProvider,
};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}, expected ECCE")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("payload size mismatch: header implies {expected} bytes, file has {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("cannot pad an empty sequence")]
    Empty,
}

impl EmbeddingError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
