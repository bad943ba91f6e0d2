//! Evaluation losses.
//!
//! ```text
//! L = L_ref + α_t L_t + α_a L_a + α_r L_r
//! ```
//!
//! L_ref is the cross-entropy of the final attention against the referred
//! object. Each auxiliary term is the cross-entropy of softmax(β r·c) over
//! the concepts c of the relevant family against the gold token, averaged
//! over the gold clues of that side.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ReasoningError;
use crate::graph::{PropertyLayout, SceneGraph};
use crate::parser::{family_for_key, InstructionProgram, InstructionRole, ParsedClues};
use crate::vocab::{ConceptVocabulary, Family};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// α_t, α_a, α_r
    pub alpha: [f64; 3],
    /// β of the auxiliary similarity softmax.
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: [0.2, 0.2, 0.2],
            temperature: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reference: f64,
    pub target: Option<f64>,
    pub anchor: Option<f64>,
    pub relation: Option<f64>,
    pub alpha: [f64; 3],
    /// Auxiliary terms left out for lack of a gold clue or instruction.
    pub skipped: Vec<String>,
    pub total: f64,
}

impl LossBreakdown {
    /// The gold mass was zero and `reference` is +∞.
    pub fn is_infinite(&self) -> bool {
        self.reference.is_infinite()
    }
}

/// −ln a[gt]; +∞ when the gold node received no mass.
pub fn reference_loss(graph: &SceneGraph, attention: &[f64], gt_id: &str) -> Result<f64, ReasoningError> {
    let i = graph
        .node_index(gt_id)
        .ok_or_else(|| ReasoningError::UnknownId(gt_id.to_string()))?;
    let p = *attention.get(i).ok_or(ReasoningError::AttentionLength {
        expected: graph.len(),
        found: attention.len(),
    })?;
    Ok(if p > 0.0 { -p.ln() } else { f64::INFINITY })
}

/// Cross-entropy of softmax(β r·c) over `family` against `gold`.
pub fn auxiliary_term(
    instruction: &[f64],
    vocab: &ConceptVocabulary,
    family: &Family,
    gold: &str,
    temperature: f64,
) -> Option<f64> {
    let concepts: Vec<_> = vocab.concepts_in(family).collect();
    let gold_idx = concepts.iter().position(|c| c.token == gold)?;
    let logits: Vec<f64> = concepts
        .iter()
        .map(|c| temperature * crate::embedding::dot(instruction, &c.embedding))
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Some(lse - logits[gold_idx])
}

fn side_term(
    program: &InstructionProgram,
    gold: &BTreeMap<String, String>,
    role: fn(usize) -> InstructionRole,
    layout: &PropertyLayout,
    vocab: &ConceptVocabulary,
    temperature: f64,
) -> Option<f64> {
    let terms: Vec<f64> = gold
        .iter()
        .filter_map(|(key, token)| {
            let family = family_for_key(key);
            let slot = layout.slot_of(&family)?;
            let ins = program.instructions.iter().find(|i| i.role == role(slot))?;
            auxiliary_term(&ins.vector, vocab, &family, token, temperature)
        })
        .collect();
    (!terms.is_empty()).then(|| terms.iter().sum::<f64>() / terms.len() as f64)
}

/// L_ref plus the weighted auxiliary terms; missing terms are skipped and
/// listed in the breakdown.
#[allow(clippy::too_many_arguments)]
pub fn combined_loss(
    graph: &SceneGraph,
    attention: &[f64],
    gt_id: &str,
    program: &InstructionProgram,
    gt_clues: &ParsedClues,
    vocab: &ConceptVocabulary,
    layout: &PropertyLayout,
    config: &LossConfig,
) -> Result<LossBreakdown, ReasoningError> {
    let reference = reference_loss(graph, attention, gt_id)?;
    let beta = config.temperature;
    let target = side_term(program, &gt_clues.target, InstructionRole::TargetProperty, layout, vocab, beta);
    let anchor = side_term(program, &gt_clues.anchor, InstructionRole::AnchorProperty, layout, vocab, beta);
    let relation = gt_clues.relation.as_ref().and_then(|gold| {
        let ins = program
            .instructions
            .iter()
            .find(|i| i.role == InstructionRole::Relation)?;
        auxiliary_term(&ins.vector, vocab, &Family::Relation, gold, beta)
    });
    let mut skipped = Vec::new();
    let mut total = reference;
    for (name, term, alpha) in [
        ("target", target, config.alpha[0]),
        ("anchor", anchor, config.alpha[1]),
        ("relation", relation, config.alpha[2]),
    ] {
        match term {
            Some(t) => total += alpha * t,
            None => skipped.push(name.to_string()),
        }
    }
    Ok(LossBreakdown {
        reference,
        target,
        anchor,
        relation,
        alpha: config.alpha,
        skipped,
        total,
    })
}
