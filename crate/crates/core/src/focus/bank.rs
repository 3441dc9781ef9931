use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FocusError;

pub const DEFAULT_QUESTION_BANK: &str = include_str!("../../assets/questionbank.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusItem {
    pub name: String,
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusCategory {
    pub name: String,
    #[serde(rename = "item")]
    pub items: Vec<FocusItem>,
}

/// Investor questions grouped by focus category and item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionBank {
    #[serde(rename = "category")]
    pub categories: Vec<FocusCategory>,
}

/// Position of a question in traversal order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRef {
    pub category: String,
    pub item: String,
    pub question: String,
}

impl QuestionBank {
    pub fn from_toml(text: &str) -> Result<Self, FocusError> {
        let bank: QuestionBank =
            toml::from_str(text).map_err(|e| FocusError::Bank(e.to_string()))?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn load(path: &Path) -> Result<Self, FocusError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FocusError::Bank(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn single(question: &str) -> Self {
        Self {
            categories: vec![FocusCategory {
                name: "Ad hoc".into(),
                items: vec![FocusItem {
                    name: "Ad hoc".into(),
                    questions: vec![question.into()],
                }],
            }],
        }
    }

    fn validate(&self) -> Result<(), FocusError> {
        if self.categories.is_empty() {
            return Err(FocusError::Bank("no categories".into()));
        }
        for c in &self.categories {
            for i in &c.items {
                if i.questions.iter().any(|q| q.trim().is_empty()) {
                    return Err(FocusError::Bank(format!(
                        "empty question under {} / {}",
                        c.name, i.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Category, then item, then question.
    pub fn questions(&self) -> Vec<QuestionRef> {
        self.categories
            .iter()
            .flat_map(|c| {
                c.items.iter().flat_map(move |i| {
                    i.questions.iter().map(move |q| QuestionRef {
                        category: c.name.clone(),
                        item: i.name.clone(),
                        question: q.clone(),
                    })
                })
            })
            .collect()
    }
}

impl Default for QuestionBank {
    fn default() -> Self {
        Self::from_toml(DEFAULT_QUESTION_BANK).expect("shipped question bank is valid")
    }
}
