//! Question-driven retrieval over transcript chunks, LLM context compression
//! and the focus text that feeds the focus embedding.

mod bank;
mod index;
mod rag;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::ProviderError;
use crate::llm::LlmError;

pub use bank::{FocusCategory, FocusItem, QuestionBank, QuestionRef, DEFAULT_QUESTION_BANK};
pub use index::{build_index, retrieve, IndexEntry, VectorIndex};
pub use rag::{
    compress_context, focus_embedding, run_question_bank, synthesize_answer, FocusAnswer,
    FocusBundle, DEFAULT_TOP_K, NONE_SENTINEL, NO_RELEVANT_INFO,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionFailure {
    pub question: QuestionRef,
    pub error: String,
}

#[derive(Debug, Error)]
pub enum FocusError {
    #[error("question bank: {0}")]
    Bank(String),
    #[error("cannot index zero chunks")]
    NoChunks,
    #[error("chunk {chunk_index} embeds to a zero-norm vector")]
    ZeroNorm { chunk_index: usize },
    #[error("query vector has zero norm")]
    ZeroQuery,
    #[error("k must be at least 1")]
    BadK,
    #[error("vector dimension {got}, index uses {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("retrieved chunk {0} is not in the chunk list")]
    UnknownChunk(usize),
    #[error("embedding chunk {chunk_index}: {source}")]
    ChunkEmbedding {
        chunk_index: usize,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("question `{question}` (chunk {chunk_index:?}): {source}")]
    Client {
        question: String,
        chunk_index: Option<usize>,
        #[source]
        source: LlmError,
    },
    #[error("{} question(s) failed", failures.len())]
    Questions {
        failures: Vec<QuestionFailure>,
        partial: Box<FocusBundle>,
    },
}
