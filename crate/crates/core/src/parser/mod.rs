//! Utterance parsing: utterance -> [`ParsedClues`] -> [`InstructionProgram`].

pub mod align;
pub mod llm;
pub mod program;
pub mod template;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{ConceptVocabulary, Family};

pub use align::{align_word, align_words, AlignedWord};
pub use llm::{
    interpret_response, parse_llm, CompletionTransport, HttpTransport, LlmClientConfig, LlmError, LlmParse,
};
pub use program::{clues_to_instructions, Instruction, InstructionProgram, InstructionRole, ProgramMode};
pub use template::{parse_template, TemplateParser};

/// Key used for the category slot in clue maps.
pub const CATEGORY_KEY: &str = "category";

/// Key clues of a referring expression. Property maps are keyed by family
/// name (`category`, `color`, `shape`, ...).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParsedClues {
    #[serde(default)]
    pub target: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(default)]
    pub anchor: BTreeMap<String, String>,
}

impl ParsedClues {
    pub fn target_category(&self) -> Option<&str> {
        self.target.get(CATEGORY_KEY).map(String::as_str)
    }

    pub fn anchor_category(&self) -> Option<&str> {
        self.anchor.get(CATEGORY_KEY).map(String::as_str)
    }

    /// Checks every token against the vocabulary family its key claims.
    pub fn validate(&self, vocab: &ConceptVocabulary) -> Result<(), ParseError> {
        for props in [&self.target, &self.anchor] {
            for (key, token) in props {
                let family = family_for_key(key);
                if vocab.family_of(token) != Some(&family) {
                    return Err(ParseError::TokenNotInFamily {
                        token: token.clone(),
                        family: family.to_string(),
                    });
                }
            }
        }
        if let Some(r) = &self.relation {
            if vocab.family_of(r) != Some(&Family::Relation) {
                return Err(ParseError::TokenNotInFamily {
                    token: r.clone(),
                    family: Family::Relation.to_string(),
                });
            }
        }
        if self.target_category().is_none() {
            return Err(ParseError::NoTargetFound);
        }
        Ok(())
    }
}

/// Vocabulary family for a clue-map key.
pub fn family_for_key(key: &str) -> Family {
    if key == CATEGORY_KEY {
        Family::Category
    } else {
        Family::attribute(key)
    }
}

/// Clue-map key for a vocabulary family (`None` for relations).
pub fn key_for_family(family: &Family) -> Option<String> {
    match family {
        Family::Category => Some(CATEGORY_KEY.to_string()),
        Family::Attribute(name) => Some(name.clone()),
        Family::Relation => None,
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("no target object category found")]
    NoTargetFound,
    #[error("utterance admits {} disjoint parses", .0.len())]
    AmbiguousParse(Vec<ParsedClues>),
    #[error("token {token:?} is not in family {family}")]
    TokenNotInFamily { token: String, family: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Lowercases, replaces punctuation with spaces and splits on whitespace.
pub fn tokenize(utterance: &str) -> Vec<String> {
    let cleaned: String = utterance
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(|w| w.to_lowercase()).collect()
}
