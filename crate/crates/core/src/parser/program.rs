//! Clues to instruction vectors.
//!
//! Relation-only programs have three instructions
//! `[anchor category, relation, target category]`; attribute programs have
//! 2L+3: anchor slots 0..=L, the relation, then target slots 0..=L. Absent
//! clues become zero vectors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{family_for_key, ParseError, ParsedClues};
use crate::embedding::{self, Embedding};
use crate::graph::PropertyLayout;
use crate::vocab::{ConceptVocabulary, Family};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProgramMode {
    #[default]
    RelationOnly,
    Attribute,
}

impl ProgramMode {
    /// I for a layout with `attribute_count` = L families.
    pub fn instruction_count(self, attribute_count: usize) -> usize {
        match self {
            ProgramMode::RelationOnly => 3,
            ProgramMode::Attribute => 2 * attribute_count + 3,
        }
    }
}

impl fmt::Display for ProgramMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProgramMode::RelationOnly => "relation-only",
            ProgramMode::Attribute => "attribute",
        })
    }
}

impl FromStr for ProgramMode {
    type Err = ProgramError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relation-only" | "relation_only" => Ok(ProgramMode::RelationOnly),
            "attribute" => Ok(ProgramMode::Attribute),
            other => Err(ProgramError::UnknownMode(other.to_string())),
        }
    }
}

/// What an instruction drives: a property round over slot j of the anchor
/// or target, or the single relation round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InstructionRole {
    AnchorProperty(usize),
    Relation,
    TargetProperty(usize),
}

impl InstructionRole {
    pub fn name(self) -> &'static str {
        match self {
            InstructionRole::AnchorProperty(_) => "anchor-property",
            InstructionRole::Relation => "relation",
            InstructionRole::TargetProperty(_) => "target-property",
        }
    }

    /// Property slot j, `None` for the relation.
    pub fn slot(self) -> Option<usize> {
        match self {
            InstructionRole::AnchorProperty(j) | InstructionRole::TargetProperty(j) => Some(j),
            InstructionRole::Relation => None,
        }
    }
}

impl fmt::Display for InstructionRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.slot() {
            Some(j) => write!(f, "{}[{j}]", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instruction {
    pub vector: Embedding,
    pub role: InstructionRole,
    /// Source concept token; `None` for padding.
    pub clue: Option<String>,
}

impl Instruction {
    pub fn padding(dim: usize, role: InstructionRole) -> Self {
        Instruction {
            vector: embedding::zeros(dim),
            role,
            clue: None,
        }
    }

    pub fn is_padding(&self) -> bool {
        embedding::is_zero(&self.vector)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstructionProgram {
    pub mode: ProgramMode,
    pub instructions: Vec<Instruction>,
}

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("unknown program mode {0:?}")]
    UnknownMode(String),
    #[error("unknown instruction role {0:?}")]
    UnknownRole(String),
    #[error("instruction {index}: property role requires a family index")]
    MissingFamily { index: usize },
    #[error("instruction {index}: token {token:?} not in vocabulary")]
    UnknownToken { index: usize, token: String },
    #[error("instruction {index}: vector has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("instruction {index}: non-finite vector")]
    NonFinite { index: usize },
    #[error("program has {found} instructions in a shape that needs {expected}")]
    Length { expected: usize, found: usize },
    #[error("instruction {index}: expected role {expected}, found {found}")]
    Order { index: usize, expected: String, found: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Wire form: `{ "mode", "instructions": [{ "role", "family"?, "token"?, "vector"? }] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramDocument {
    pub mode: String,
    pub instructions: Vec<InstructionDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructionDocument {
    pub role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
}

impl InstructionProgram {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Expected role sequence for `mode` with L attribute families.
    pub fn roles(mode: ProgramMode, attribute_count: usize) -> Vec<InstructionRole> {
        let slots = match mode {
            ProgramMode::RelationOnly => 0,
            ProgramMode::Attribute => attribute_count,
        };
        (0..=slots)
            .map(InstructionRole::AnchorProperty)
            .chain(std::iter::once(InstructionRole::Relation))
            .chain((0..=slots).map(InstructionRole::TargetProperty))
            .collect()
    }

    /// L implied by the program length, `None` for relation-only programs.
    pub fn attribute_count(&self) -> Option<usize> {
        match self.mode {
            ProgramMode::RelationOnly => None,
            ProgramMode::Attribute => Some((self.len().saturating_sub(3)) / 2),
        }
    }

    /// Checks length and role order against the mode.
    pub fn check_shape(&self) -> Result<(), ProgramError> {
        let l = match self.mode {
            ProgramMode::RelationOnly => 0,
            ProgramMode::Attribute => {
                if self.len() < 3 || self.len().is_multiple_of(2) {
                    return Err(ProgramError::Length {
                        expected: 3,
                        found: self.len(),
                    });
                }
                (self.len() - 3) / 2
            }
        };
        let roles = Self::roles(self.mode, l);
        if roles.len() != self.len() {
            return Err(ProgramError::Length {
                expected: roles.len(),
                found: self.len(),
            });
        }
        for (index, (want, got)) in roles.iter().zip(&self.instructions).enumerate() {
            if *want != got.role {
                return Err(ProgramError::Order {
                    index,
                    expected: want.to_string(),
                    found: got.role.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn to_document(&self, with_vectors: bool) -> ProgramDocument {
        ProgramDocument {
            mode: self.mode.to_string(),
            instructions: self
                .instructions
                .iter()
                .map(|ins| InstructionDocument {
                    role: ins.role.name().to_string(),
                    family: ins.role.slot(),
                    token: ins.clue.clone(),
                    vector: with_vectors.then(|| ins.vector.clone()),
                })
                .collect(),
        }
    }

    pub fn to_json(&self, with_vectors: bool) -> String {
        serde_json::to_string_pretty(&self.to_document(with_vectors)).expect("program serializes")
    }

    /// Rebuilds a program. A missing vector is taken from the token's concept
    /// embedding, or zero when there is no token either.
    pub fn from_document(doc: &ProgramDocument, vocab: &ConceptVocabulary) -> Result<Self, ProgramError> {
        let mode: ProgramMode = doc.mode.parse()?;
        let dim = vocab.dim();
        let mut instructions = Vec::with_capacity(doc.instructions.len());
        for (index, d) in doc.instructions.iter().enumerate() {
            let role = match d.role.as_str() {
                "relation" => InstructionRole::Relation,
                "anchor-property" => {
                    InstructionRole::AnchorProperty(d.family.ok_or(ProgramError::MissingFamily { index })?)
                }
                "target-property" => {
                    InstructionRole::TargetProperty(d.family.ok_or(ProgramError::MissingFamily { index })?)
                }
                other => return Err(ProgramError::UnknownRole(other.to_string())),
            };
            let vector = match (&d.vector, &d.token) {
                (Some(v), _) => {
                    if v.len() != dim {
                        return Err(ProgramError::DimensionMismatch {
                            index,
                            expected: dim,
                            found: v.len(),
                        });
                    }
                    if !embedding::all_finite(v) {
                        return Err(ProgramError::NonFinite { index });
                    }
                    v.clone()
                }
                (None, Some(t)) => vocab
                    .embedding(t)
                    .cloned()
                    .ok_or_else(|| ProgramError::UnknownToken {
                        index,
                        token: t.clone(),
                    })?,
                (None, None) => embedding::zeros(dim),
            };
            instructions.push(Instruction {
                vector,
                role,
                clue: d.token.clone(),
            });
        }
        let program = InstructionProgram { mode, instructions };
        program.check_shape()?;
        Ok(program)
    }

    pub fn from_json(text: &str, vocab: &ConceptVocabulary) -> Result<Self, ProgramError> {
        Self::from_document(&serde_json::from_str(text)?, vocab)
    }
}

/// Builds the program for `clues`. Returns the program and warnings for
/// clues that could not be placed: attribute clues in relation-only mode and
/// families absent from the layout.
pub fn clues_to_instructions(
    clues: &ParsedClues,
    vocab: &ConceptVocabulary,
    layout: &PropertyLayout,
    mode: ProgramMode,
) -> Result<(InstructionProgram, Vec<String>), ParseError> {
    let dim = vocab.dim();
    let slots = match mode {
        ProgramMode::RelationOnly => 1,
        ProgramMode::Attribute => layout.attribute_count() + 1,
    };
    let mut warnings = Vec::new();

    let mut side = |props: &BTreeMap<String, String>,
                    role: fn(usize) -> InstructionRole,
                    who: &str|
     -> Result<Vec<Instruction>, ParseError> {
        let mut out: Vec<Instruction> = (0..slots).map(|j| Instruction::padding(dim, role(j))).collect();
        for (key, token) in props {
            let family = family_for_key(key);
            let concept = lookup(vocab, token, &family)?;
            match layout.slot_of(&family).filter(|&j| j < slots) {
                Some(j) => {
                    out[j].vector = concept.clone();
                    out[j].clue = Some(token.clone());
                }
                None => {
                    let msg = if mode == ProgramMode::RelationOnly {
                        format!("{who} clue {key}={token:?} dropped in relation-only mode")
                    } else {
                        format!("{who} clue {key}={token:?} has no slot in the property layout")
                    };
                    warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
        Ok(out)
    };

    let anchor = side(&clues.anchor, InstructionRole::AnchorProperty, "anchor")?;
    let target = side(&clues.target, InstructionRole::TargetProperty, "target")?;
    let relation = match &clues.relation {
        Some(r) => Instruction {
            vector: lookup(vocab, r, &Family::Relation)?.clone(),
            role: InstructionRole::Relation,
            clue: Some(r.clone()),
        },
        None => Instruction::padding(dim, InstructionRole::Relation),
    };
    let mut instructions = anchor;
    instructions.push(relation);
    instructions.extend(target);
    Ok((InstructionProgram { mode, instructions }, warnings))
}

fn lookup<'v>(vocab: &'v ConceptVocabulary, token: &str, family: &Family) -> Result<&'v Embedding, ParseError> {
    match vocab.get(token) {
        Some(c) if &c.family == family => Ok(&c.embedding),
        _ => Err(ParseError::TokenNotInFamily {
            token: token.to_string(),
            family: family.to_string(),
        }),
    }
}
