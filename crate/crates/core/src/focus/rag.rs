use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{retrieve, FocusError, QuestionBank, QuestionFailure, QuestionRef, VectorIndex};
use crate::concurrency::bounded_map;
use crate::embedding::{EmbeddingProvider, TextEmbedding};
use crate::llm::{Chunk, LlmClient, PromptKey, PromptRegistry, TEMPERATURE};

pub const DEFAULT_TOP_K: usize = 4;
pub const NONE_SENTINEL: &str = "NONE";
pub const NO_RELEVANT_INFO: &str = "No relevant information found.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusAnswer {
    pub category: String,
    pub item: String,
    pub question: String,
    pub selected_sentences: Vec<String>,
    pub answer: String,
}

/// Answers in question-bank order plus the text that is embedded into the
/// focus vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusBundle {
    answers: Vec<FocusAnswer>,
    concatenated_text: String,
}

impl FocusBundle {
    pub fn new(answers: Vec<FocusAnswer>) -> Self {
        let concatenated_text = answers
            .iter()
            .map(|a| format!("Q: {}\nA: {}", a.question, a.answer))
            .collect::<Vec<_>>()
            .join("\n\n");
        Self {
            answers,
            concatenated_text,
        }
    }

    pub fn answers(&self) -> &[FocusAnswer] {
        &self.answers
    }

    pub fn concatenated_text(&self) -> &str {
        &self.concatenated_text
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FocusError> {
        let b: FocusBundle =
            serde_json::from_str(text).map_err(|e| FocusError::Bank(e.to_string()))?;
        Ok(Self::new(b.answers))
    }
}

/// Ask the model, chunk by chunk, for the sentences that bear on
/// `question`. Output lines are sentences; `NONE` contributes nothing and
/// repeats keep their first occurrence.
pub fn compress_context(
    client: &dyn LlmClient,
    prompts: &PromptRegistry,
    question: &str,
    chunks: &[&Chunk],
) -> Result<Vec<String>, FocusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for chunk in chunks {
        let user = prompts.render(PromptKey::RelevanceFilter, Some(question), &chunk.text);
        let reply = client
            .complete(prompts.system(), &user, TEMPERATURE)
            .map_err(|e| FocusError::Client {
                question: question.to_string(),
                chunk_index: Some(chunk.chunk_index),
                source: e,
            })?;
        for line in reply.lines().map(str::trim) {
            if line.is_empty() || line == NONE_SENTINEL {
                continue;
            }
            if seen.insert(line.to_string()) {
                out.push(line.to_string());
            }
        }
    }
    Ok(out)
}

/// One answer per question from the selected sentences; no call is made
/// when nothing was selected.
pub fn synthesize_answer(
    client: &dyn LlmClient,
    prompts: &PromptRegistry,
    question: &str,
    sentences: &[String],
) -> Result<String, FocusError> {
    if sentences.is_empty() {
        return Ok(NO_RELEVANT_INFO.to_string());
    }
    let system = prompts.render(PromptKey::FocusExtraction, None, question);
    let user = prompts.render(
        PromptKey::AnswerSynthesis,
        Some(question),
        &sentences.join("\n"),
    );
    client
        .complete(&system, &user, TEMPERATURE)
        .map_err(|e| FocusError::Client {
            question: question.to_string(),
            chunk_index: None,
            source: e,
        })
}

fn answer_one(
    client: &dyn LlmClient,
    prompts: &PromptRegistry,
    provider: &dyn EmbeddingProvider,
    index: &VectorIndex,
    chunks: &[Chunk],
    q: &QuestionRef,
    k: usize,
) -> Result<FocusAnswer, FocusError> {
    let query = provider.embed_text(&q.question)?;
    let hits = retrieve(index, query.as_slice(), k)?;
    let retrieved: Vec<&Chunk> = hits
        .iter()
        .map(|(ci, _)| {
            chunks
                .iter()
                .find(|c| c.chunk_index == *ci)
                .ok_or(FocusError::UnknownChunk(*ci))
        })
        .collect::<Result<_, _>>()?;
    let selected = compress_context(client, prompts, &q.question, &retrieved)?;
    let answer = synthesize_answer(client, prompts, &q.question, &selected)?;
    Ok(FocusAnswer {
        category: q.category.clone(),
        item: q.item.clone(),
        question: q.question.clone(),
        selected_sentences: selected,
        answer,
    })
}

/// Embed, retrieve, compress and answer every question in bank order. A
/// failing question does not stop the others; failures come back together
/// with the partial bundle.
#[allow(clippy::too_many_arguments)]
pub fn run_question_bank(
    client: &dyn LlmClient,
    prompts: &PromptRegistry,
    provider: &dyn EmbeddingProvider,
    index: &VectorIndex,
    chunks: &[Chunk],
    bank: &QuestionBank,
    k: usize,
    in_flight: usize,
) -> Result<FocusBundle, FocusError> {
    let questions = bank.questions();
    let results = bounded_map(&questions, in_flight, |_, q| {
        answer_one(client, prompts, provider, index, chunks, q, k)
    });
    let mut answers = Vec::with_capacity(questions.len());
    let mut failures = Vec::new();
    for (q, r) in questions.into_iter().zip(results) {
        match r {
            Ok(a) => answers.push(a),
            Err(e) => failures.push(QuestionFailure {
                question: q,
                error: e.to_string(),
            }),
        }
    }
    let bundle = FocusBundle::new(answers);
    if failures.is_empty() {
        Ok(bundle)
    } else {
        Err(FocusError::Questions {
            failures,
            partial: Box::new(bundle),
        })
    }
}

pub fn focus_embedding(
    provider: &dyn EmbeddingProvider,
    bundle: &FocusBundle,
) -> Result<TextEmbedding, FocusError> {
    Ok(provider.embed_text(bundle.concatenated_text())?)
}
