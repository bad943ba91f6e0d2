//! Synthetic datasets, end-to-end evaluation and ablation sweeps.

pub mod dataset;
pub mod eval;
pub mod generate;

use thiserror::Error;

use crate::graph::GraphError;
use crate::parser::ParseError;
use crate::reasoning::ReasoningError;
use crate::relations::RelationError;
use crate::scene::SceneError;

pub use dataset::{generate_dataset, Dataset, RefRecord};
pub use eval::{
    evaluate, evaluate_with, proportions, spearman, sweep_gt_proportion, sweep_top_k, CurvePoint, EngineConfig,
    EvalReport, ExampleRecord, RelationStats, TopKRow,
};
pub use generate::{generate_scene, generate_utterance, GenConfig, GeneratedRef, GroundTruthView};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scene {0}: could not place every object")]
    PlacementFailed(String),
    #[error("scene {0}: no unambiguous (anchor, relation, target) triple")]
    NoUnambiguousTriple(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("refs line {line}: {message}")]
    Refs { line: usize, message: String },
    #[error("scene file {path}: {source}")]
    SceneFile { path: String, source: SceneError },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Combines two seeds into a well-mixed third (splitmix64 finalizer).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed for a string (FNV-1a).
pub fn seed_for(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}
