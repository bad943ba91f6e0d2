//! Attention-transfer reasoning over a [`SceneGraph`].
//!
//! Attention starts uniform. A property round for slot j scores every node
//! against the instruction and merges the result into the running attention:
//!
//! ```text
//! b^s = softmax_s(β_m · W_s σ(r ∘ W^j s^j))
//! a^s = softmax_s(β_m · (b^s + a_prev^s))
//! ```
//!
//! The relation round moves attention along edges (s', s):
//!
//! ```text
//! a^s = softmax_s(β_t · W_r Σ_{(s',s)} a_prev^{s'} σ(r ∘ W_e e_{s's}))
//! ```
//!
//! Nodes without incoming edges get logit 0.

pub mod loss;
pub mod weights;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{self, Embedding};
use crate::graph::SceneGraph;
use crate::parser::program::ProgramError;
use crate::parser::{Instruction, InstructionProgram, InstructionRole, ProgramMode};

pub use loss::{combined_loss, reference_loss, LossBreakdown, LossConfig};
pub use weights::{Sigma, WeightBundle, WeightsDocument, DEFAULT_BETA};

use weights::project;

/// Probability per graph node, in node order.
pub type AttentionDistribution = Vec<f64>;

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error("scene graph has no nodes")]
    EmptyScene,
    #[error("instruction has dimension {found}, graph has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("property family {family} out of range (graph has {slots} slots)")]
    FamilyOutOfRange { family: usize, slots: usize },
    #[error("instruction role {found} cannot drive a {expected} round")]
    WrongRole { expected: &'static str, found: String },
    #[error("program of {found} instructions does not fit a graph with {slots} property slots")]
    ProgramMismatch { found: usize, slots: usize },
    #[error("attention has {found} entries for {expected} nodes")]
    AttentionLength { expected: usize, found: usize },
    #[error("unknown object id {0:?}")]
    UnknownId(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// a_0 = 1/N.
pub fn init_attention(n: usize) -> Result<AttentionDistribution, ReasoningError> {
    if n == 0 {
        return Err(ReasoningError::EmptyScene);
    }
    Ok(vec![1.0 / n as f64; n])
}

/// True when `a` is non-negative and sums to 1 within `tolerance`.
pub fn is_distribution(a: &[f64], tolerance: f64) -> bool {
    a.iter().all(|&x| x >= 0.0 && x.is_finite()) && (a.iter().sum::<f64>() - 1.0).abs() < tolerance
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub z: String,
    pub x: String,
    /// W_r · a_prev(z) σ(r ∘ W_e e_zx)
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoundScores {
    Property { b: Vec<f64> },
    Relation { logits: Vec<f64>, transfer: Vec<Transfer> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clue: Option<String>,
    pub attention_in: Vec<f64>,
    pub attention_out: Vec<f64>,
    pub scores: RoundScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    /// Object id per attention entry.
    pub ids: Vec<String>,
    pub rounds: Vec<RoundTrace>,
    pub selected: String,
    pub score: f64,
}

impl ReasoningTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn final_attention(&self) -> &[f64] {
        self.rounds.last().map_or(&[], |r| &r.attention_out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grounding {
    pub selected: String,
    pub index: usize,
    pub score: f64,
    pub attention: AttentionDistribution,
    pub trace: ReasoningTrace,
}

fn check_dim(graph: &SceneGraph, instr: &Instruction) -> Result<(), ReasoningError> {
    if instr.vector.len() != graph.dim {
        return Err(ReasoningError::DimensionMismatch {
            expected: graph.dim,
            found: instr.vector.len(),
        });
    }
    Ok(())
}

fn check_attention(graph: &SceneGraph, a: &[f64]) -> Result<(), ReasoningError> {
    if graph.is_empty() {
        return Err(ReasoningError::EmptyScene);
    }
    if a.len() != graph.len() {
        return Err(ReasoningError::AttentionLength {
            expected: graph.len(),
            found: a.len(),
        });
    }
    Ok(())
}

/// W_s σ(r ∘ p) for a projected property or relation vector p.
fn gated_score(w: &nalgebra::DVector<f64>, sigma: Sigma, r: &[f64], p: &[f64]) -> f64 {
    r.iter()
        .zip(p)
        .zip(w.iter())
        .map(|((ri, pi), wi)| wi * sigma.apply(ri * pi))
        .sum()
}

fn property_from_projected(
    a_prev: &[f64],
    instr: &[f64],
    projected: &[Embedding],
    weights: &WeightBundle,
) -> (AttentionDistribution, Vec<f64>) {
    let scores: Vec<f64> = projected
        .iter()
        .map(|p| gated_score(&weights.w_s, weights.sigma, instr, p))
        .collect();
    let b = embedding::softmax_scaled(&scores, weights.beta_merge);
    let merged: Vec<f64> = b.iter().zip(a_prev).map(|(x, y)| x + y).collect();
    (embedding::softmax_scaled(&merged, weights.beta_merge), b)
}

fn project_slot(graph: &SceneGraph, weights: &WeightBundle, family: usize) -> Vec<Embedding> {
    graph
        .nodes
        .iter()
        .map(|n| project(&weights.w_prop[family], &n.embeddings[family]))
        .collect()
}

fn check_family(graph: &SceneGraph, weights: &WeightBundle, family: usize) -> Result<(), ReasoningError> {
    let slots = graph.slot_count().min(weights.slots());
    if family >= slots {
        return Err(ReasoningError::FamilyOutOfRange { family, slots });
    }
    Ok(())
}

/// One property round over slot `family`; returns the merged attention and b.
pub fn property_round(
    graph: &SceneGraph,
    a_prev: &[f64],
    instr: &Instruction,
    weights: &WeightBundle,
    family: usize,
) -> Result<(AttentionDistribution, Vec<f64>), ReasoningError> {
    check_attention(graph, a_prev)?;
    check_dim(graph, instr)?;
    if instr.role == InstructionRole::Relation {
        return Err(ReasoningError::WrongRole {
            expected: "property",
            found: instr.role.to_string(),
        });
    }
    check_family(graph, weights, family)?;
    let projected = project_slot(graph, weights, family);
    Ok(property_from_projected(a_prev, &instr.vector, &projected, weights))
}

fn relation_from_projected(
    graph: &SceneGraph,
    a_prev: &[f64],
    instr: &[f64],
    projected_edges: &[Embedding],
    weights: &WeightBundle,
) -> (AttentionDistribution, Vec<f64>, Vec<Transfer>) {
    let mut logits = vec![0.0; graph.len()];
    let mut transfer = Vec::new();
    for (edge, p) in graph.edges.iter().zip(projected_edges) {
        let mass = a_prev[edge.source] * gated_score(&weights.w_r, weights.sigma, instr, p);
        logits[edge.target] += mass;
        if mass != 0.0 {
            transfer.push(Transfer {
                z: graph.nodes[edge.source].object_id.clone(),
                x: graph.nodes[edge.target].object_id.clone(),
                mass,
            });
        }
    }
    (embedding::softmax_scaled(&logits, weights.beta_transfer), logits, transfer)
}

fn project_edges(graph: &SceneGraph, weights: &WeightBundle) -> Vec<Embedding> {
    graph.edges.iter().map(|e| project(&weights.w_e, &e.embedding)).collect()
}

/// The relation round; returns the new attention, the per-node logits and
/// the nonzero per-edge transfers.
pub fn relation_round(
    graph: &SceneGraph,
    a_prev: &[f64],
    instr: &Instruction,
    weights: &WeightBundle,
) -> Result<(AttentionDistribution, Vec<f64>, Vec<Transfer>), ReasoningError> {
    check_attention(graph, a_prev)?;
    check_dim(graph, instr)?;
    if instr.role != InstructionRole::Relation {
        return Err(ReasoningError::WrongRole {
            expected: "relation",
            found: instr.role.to_string(),
        });
    }
    let projected = project_edges(graph, weights);
    Ok(relation_from_projected(graph, a_prev, &instr.vector, &projected, weights))
}

/// Index of the largest entry; exact ties go to the smallest object id.
pub fn select(graph: &SceneGraph, attention: &[f64]) -> Option<usize> {
    let max = attention.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..attention.len())
        .filter(|&i| attention[i] == max)
        .min_by(|&a, &b| graph.nodes[a].object_id.cmp(&graph.nodes[b].object_id))
}

/// Runs every instruction of `program` in order and selects the target.
pub fn ground(
    graph: &SceneGraph,
    program: &InstructionProgram,
    weights: &WeightBundle,
) -> Result<Grounding, ReasoningError> {
    if graph.is_empty() {
        return Err(ReasoningError::EmptyScene);
    }
    program.check_shape()?;
    if program.mode == ProgramMode::Attribute && program.len() != 2 * graph.slot_count() + 1 {
        return Err(ReasoningError::ProgramMismatch {
            found: program.len(),
            slots: graph.slot_count(),
        });
    }
    weights.validate()?;
    if weights.dim != graph.dim {
        return Err(ReasoningError::InvalidWeights(format!(
            "weights have dimension {}, graph has {}",
            weights.dim, graph.dim
        )));
    }

    let mut slot_cache: Vec<Option<Vec<Embedding>>> = vec![None; graph.slot_count()];
    let mut edge_cache: Option<Vec<Embedding>> = None;
    let mut a = init_attention(graph.len())?;
    let mut rounds = Vec::with_capacity(program.len());
    for instr in &program.instructions {
        check_dim(graph, instr)?;
        let (out, scores) = match instr.role.slot() {
            Some(j) => {
                check_family(graph, weights, j)?;
                let projected = slot_cache[j].get_or_insert_with(|| project_slot(graph, weights, j));
                let (out, b) = property_from_projected(&a, &instr.vector, projected, weights);
                (out, RoundScores::Property { b })
            }
            None => {
                let projected = edge_cache.get_or_insert_with(|| project_edges(graph, weights));
                let (out, logits, transfer) = relation_from_projected(graph, &a, &instr.vector, projected, weights);
                (out, RoundScores::Relation { logits, transfer })
            }
        };
        rounds.push(RoundTrace {
            role: instr.role.name().to_string(),
            family: instr.role.slot(),
            clue: instr.clue.clone(),
            attention_in: std::mem::replace(&mut a, out.clone()),
            attention_out: out,
            scores,
        });
    }
    let index = select(graph, &a).ok_or(ReasoningError::EmptyScene)?;
    let selected = graph.nodes[index].object_id.clone();
    let score = a[index];
    Ok(Grounding {
        trace: ReasoningTrace {
            ids: graph.nodes.iter().map(|n| n.object_id.clone()).collect(),
            rounds,
            selected: selected.clone(),
            score,
        },
        selected,
        index,
        score,
        attention: a,
    })
}
