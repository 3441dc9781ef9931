use serde::{Deserialize, Serialize};

use super::{Chunk, LlmClient, LlmError, PromptKey, PromptRegistry, TEMPERATURE};
use crate::concurrency::bounded_map;
use crate::embedding::{EmbeddingProvider, TextEmbedding};

/// Default cap on concurrent in-flight chat calls.
pub const DEFAULT_IN_FLIGHT: usize = 4;

/// Per-chunk summaries and the overview built from them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryBundle {
    chunk_summaries: Vec<String>,
    overall_summary: String,
}

impl SummaryBundle {
    pub fn new(chunk_summaries: Vec<String>, overall_summary: String) -> Result<Self, LlmError> {
        if chunk_summaries.is_empty() {
            return Err(LlmError::InvalidBundle("no chunk summaries".into()));
        }
        if overall_summary.trim().is_empty() {
            return Err(LlmError::InvalidBundle("empty overall summary".into()));
        }
        Ok(Self {
            chunk_summaries,
            overall_summary,
        })
    }

    pub fn chunk_summaries(&self) -> &[String] {
        &self.chunk_summaries
    }

    pub fn overall_summary(&self) -> &str {
        &self.overall_summary
    }
}

pub fn summarize_chunk(
    client: &dyn LlmClient,
    prompts: &PromptRegistry,
    chunk: &Chunk,
) -> Result<String, LlmError> {
    let user = prompts.render(PromptKey::ChunkSummary, None, &chunk.text);
    client
        .complete(prompts.system(), &user, TEMPERATURE)
        .map_err(|e| LlmError::Chunk {
            chunk_index: chunk.chunk_index,
            source: Box::new(e),
        })
}

/// Summaries are listed as `[1] ...`, `[2] ...` in chunk order.
pub fn summarize_overall(
    client: &dyn LlmClient,
    prompts: &PromptRegistry,
    chunk_summaries: &[String],
) -> Result<String, LlmError> {
    if chunk_summaries.is_empty() {
        return Err(LlmError::InvalidBundle("no chunk summaries".into()));
    }
    let payload = chunk_summaries
        .iter()
        .enumerate()
        .map(|(i, s)| format!("[{}] {}", i + 1, s))
        .collect::<Vec<_>>()
        .join("\n");
    let user = prompts.render(PromptKey::OverallSummary, None, &payload);
    client.complete(prompts.system(), &user, TEMPERATURE)
}

/// Two-level summarization: every chunk independently (at most `in_flight`
/// concurrent calls), then one overview over the ordered chunk summaries.
pub fn summarize_transcript(
    client: &dyn LlmClient,
    prompts: &PromptRegistry,
    chunks: &[Chunk],
    in_flight: usize,
) -> Result<SummaryBundle, LlmError> {
    let chunk_summaries = bounded_map(chunks, in_flight, |_, c| {
        summarize_chunk(client, prompts, c)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let overall = summarize_overall(client, prompts, &chunk_summaries)?;
    SummaryBundle::new(chunk_summaries, overall)
}

pub fn chunk_summaries_text(bundle: &SummaryBundle) -> String {
    bundle.chunk_summaries.join("\n")
}

/// Overall summary first, then the chunk summaries in order.
pub fn summary_text(bundle: &SummaryBundle) -> String {
    format!(
        "{}\n\n{}",
        bundle.overall_summary,
        chunk_summaries_text(bundle)
    )
}

pub fn summary_embedding(
    provider: &dyn EmbeddingProvider,
    bundle: &SummaryBundle,
) -> Result<TextEmbedding, LlmError> {
    Ok(provider.embed_text(&summary_text(bundle))?)
}
