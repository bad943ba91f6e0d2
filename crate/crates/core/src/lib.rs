//! Grounding referring expressions in 3D scenes by attention transfer over a
//! concept-embedded scene graph.
//!
//! The pipeline is:
//!
//! 1. [`vocab`]: a shared vocabulary of category, attribute and relation
//!    concepts with d-dimensional embeddings.
//! 2. [`scene`] + [`relations`] + [`graph`]: object proposals become graph
//!    nodes carrying property embeddings; ordered pairs become edges
//!    carrying relation probabilities and their embedding.
//! 3. [`parser`]: an utterance is parsed into clues and then into a fixed-length
//!    instruction program (anchor properties, relation, target properties).
//! 4. [`reasoning`]: one attention round per instruction; the target is the
//!    node with the highest final attention.
//! 5. [`harness`]: synthetic datasets, evaluation and ablation sweeps.

pub mod embedding;
pub mod graph;
pub mod harness;
pub mod parser;
pub mod reasoning;
pub mod relations;
pub mod scene;
pub mod vocab;

pub use graph::{build_scene_graph, GraphConfig, PropertyLayout, SceneGraph};
pub use relations::{RelationConfig, RelationKind};
pub use scene::{load_scene, Scene};
pub use vocab::{ConceptVocabulary, Family};
