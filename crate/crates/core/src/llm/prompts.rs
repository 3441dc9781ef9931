use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::LlmError;

pub const DEFAULT_PROMPTS: &str = include_str!("../../assets/prompts.toml");

pub const PAYLOAD_OPEN: &str = "<payload>";
pub const PAYLOAD_CLOSE: &str = "</payload>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PromptKey {
    ChunkSummary,
    OverallSummary,
    FocusExtraction,
    RelevanceFilter,
    AnswerSynthesis,
}

impl PromptKey {
    pub const ALL: [PromptKey; 5] = [
        PromptKey::ChunkSummary,
        PromptKey::OverallSummary,
        PromptKey::FocusExtraction,
        PromptKey::RelevanceFilter,
        PromptKey::AnswerSynthesis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptKey::ChunkSummary => "chunk_summary",
            PromptKey::OverallSummary => "overall_summary",
            PromptKey::FocusExtraction => "focus_extraction",
            PromptKey::RelevanceFilter => "relevance_filter",
            PromptKey::AnswerSynthesis => "answer_synthesis",
        }
    }
}

#[derive(Deserialize)]
struct RawRegistry {
    system: Option<String>,
    #[serde(flatten)]
    templates: BTreeMap<String, String>,
}

/// Prompt templates keyed by task, loaded from `prompts.toml`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptRegistry {
    system: String,
    templates: BTreeMap<PromptKey, String>,
}

impl PromptRegistry {
    pub fn from_toml(text: &str) -> Result<Self, LlmError> {
        let raw: RawRegistry = toml::from_str(text).map_err(|e| LlmError::Prompt(e.to_string()))?;
        let mut templates = BTreeMap::new();
        for key in PromptKey::ALL {
            let t = raw
                .templates
                .get(key.name())
                .ok_or_else(|| LlmError::Prompt(format!("missing template `{}`", key.name())))?;
            if !t.contains("{payload}") {
                return Err(LlmError::Prompt(format!(
                    "template `{}` has no {{payload}} placeholder",
                    key.name()
                )));
            }
            templates.insert(key, t.trim().to_string());
        }
        Ok(Self {
            system: raw.system.unwrap_or_default(),
            templates,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Prompt(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn system(&self) -> &str {
        &self.system
    }

    pub fn template(&self, key: PromptKey) -> &str {
        &self.templates[&key]
    }

    /// Substitute `{question}` and `{payload}`.
    pub fn render(&self, key: PromptKey, question: Option<&str>, payload: &str) -> String {
        let mut t = self.template(key).to_string();
        if let Some(q) = question {
            t = t.replace("{question}", q);
        }
        t.replace("{payload}", payload)
    }
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::from_toml(DEFAULT_PROMPTS).expect("shipped prompts.toml is valid")
    }
}

/// The text between the first payload markers, if any.
pub fn payload_section(prompt: &str) -> Option<&str> {
    let start = prompt.find(PAYLOAD_OPEN)? + PAYLOAD_OPEN.len();
    let end = start + prompt[start..].find(PAYLOAD_CLOSE)?;
    Some(prompt[start..end].trim_matches('\n'))
}
