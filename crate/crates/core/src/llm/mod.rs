//! Chat-model access, prompt templates, transcript chunking and hierarchical
//! summarization.

mod chunk;
mod prompts;
mod summarize;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpError, JsonPoster, RemoteConfig};

pub use chunk::{
    chunk_text, dechunk, Chunk, DEFAULT_MAX_CHARS, DEFAULT_OVERLAP_CHARS, SNAP_WINDOW,
};
pub use prompts::{payload_section, PromptKey, PromptRegistry, DEFAULT_PROMPTS};
pub use summarize::{
    chunk_summaries_text, summarize_chunk, summarize_overall, summarize_transcript,
    summary_embedding, summary_text, SummaryBundle, DEFAULT_IN_FLIGHT,
};

/// Sampling temperature for every pipeline call.
pub const TEMPERATURE: f64 = 0.0;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("llm transport error: {0}")]
    Transport(String),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("prompt registry: {0}")]
    Prompt(String),
    #[error("chunk {chunk_index}: {source}")]
    Chunk {
        chunk_index: usize,
        #[source]
        source: Box<LlmError>,
    },
    #[error("invalid summary bundle: {0}")]
    InvalidBundle(String),
    #[error(transparent)]
    Provider(#[from] crate::embedding::ProviderError),
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, system: &str, user: &str, temperature: f64) -> Result<String, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn complete(&self, system: &str, user: &str, temperature: f64) -> Result<String, LlmError> {
        (**self).complete(system, user, temperature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockBehavior {
    /// Reply with `tag` followed by the first sentence of the payload section.
    EchoFirstSentence,
    /// Reply with a fixed string.
    Fixed(String),
    /// Echo, but fail whenever the user prompt contains the marker.
    FailWhen(String),
}

/// Deterministic offline client.
#[derive(Debug)]
pub struct MockClient {
    behavior: MockBehavior,
    tag: String,
    calls: AtomicUsize,
}

pub const MOCK_TAG: &str = "[mock] ";

impl MockClient {
    pub fn new(behavior: MockBehavior) -> Self {
        Self {
            behavior,
            tag: MOCK_TAG.into(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn echo() -> Self {
        Self::new(MockBehavior::EchoFirstSentence)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn echo_reply(&self, user: &str) -> String {
        let payload = payload_section(user).unwrap_or(user);
        format!("{}{}", self.tag, first_sentence(payload))
    }
}

/// First non-empty line, cut after the first terminator that is followed by
/// whitespace or the end of the line.
pub fn first_sentence(text: &str) -> &str {
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    let mut chars = line.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            match chars.peek() {
                None => return line,
                Some((_, n)) if n.is_whitespace() => return &line[..i + c.len_utf8()],
                _ => {}
            }
        }
    }
    line
}

impl LlmClient for MockClient {
    fn complete(&self, _system: &str, user: &str, _temperature: f64) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.behavior {
            MockBehavior::EchoFirstSentence => Ok(self.echo_reply(user)),
            MockBehavior::Fixed(s) => Ok(s.clone()),
            MockBehavior::FailWhen(marker) => {
                if user.contains(marker.as_str()) {
                    Err(LlmError::Transport(format!(
                        "injected failure on `{marker}`"
                    )))
                } else {
                    Ok(self.echo_reply(user))
                }
            }
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatContent,
}

#[derive(Deserialize)]
struct ChatContent {
    content: Option<String>,
}

/// OpenAI-compatible `/chat/completions` client.
pub struct RemoteChatClient {
    poster: JsonPoster,
}

impl RemoteChatClient {
    pub fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        Ok(Self {
            poster: JsonPoster::new(config)?,
        })
    }
}

impl LlmClient for RemoteChatClient {
    fn complete(&self, system: &str, user: &str, temperature: f64) -> Result<String, LlmError> {
        let resp: ChatResponse = self.poster.post(
            "chat/completions",
            &ChatRequest {
                model: &self.poster.config().model,
                messages: vec![
                    ChatMessage {
                        role: "system",
                        content: system,
                    },
                    ChatMessage {
                        role: "user",
                        content: user,
                    },
                ],
                temperature,
            },
        )?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Transport("response carried no message content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_sentence_rules() {
        assert_eq!(
            first_sentence("Revenue rose 3.5% this year. Costs fell."),
            "Revenue rose 3.5% this year."
        );
        assert_eq!(
            first_sentence("\n\nNo terminator here\nnext"),
            "No terminator here"
        );
        assert_eq!(first_sentence("Done!"), "Done!");
        assert_eq!(first_sentence(""), "");
    }

    #[test]
    fn mock_behaviors() {
        let m = MockClient::echo();
        let out = m
            .complete("", "x <payload>\nHi there. More.\n</payload>", 0.0)
            .unwrap();
        assert_eq!(out, "[mock] Hi there.");
        assert_eq!(m.calls(), 1);

        let m = MockClient::new(MockBehavior::Fixed("NONE".into()));
        assert_eq!(m.complete("", "anything", 0.0).unwrap(), "NONE");

        let m = MockClient::new(MockBehavior::FailWhen("boom".into()));
        assert!(m.complete("", "boom", 0.0).is_err());
        assert!(m.complete("", "fine.", 0.0).is_ok());
    }
}
