//! Concept-embedded scene graph.
//!
//! Each node holds L+1 property embeddings: s^0 is the probability-weighted
//! sum of category concepts, s^1..s^L follow the attribute family order of a
//! [`PropertyLayout`]. Each directed edge (z → x) holds the relation
//! probabilities R^j(z, x) and the embedding e = Σ_j R^j e^j.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{self, Embedding};
use crate::relations::{
    build_relation_matrix, size_superlative_probability, RelationConfig, RelationError, SizeKind,
};
use crate::scene::{ObjectProposal, Scene};
use crate::vocab::{ConceptVocabulary, Family};

/// Reference colors used to name a proposal's mean RGB.
pub const NAMED_COLORS: [(&str, [f64; 3]); 10] = [
    ("red", [1.0, 0.0, 0.0]),
    ("green", [0.0, 0.5, 0.0]),
    ("blue", [0.0, 0.0, 1.0]),
    ("white", [1.0, 1.0, 1.0]),
    ("black", [0.0, 0.0, 0.0]),
    ("brown", [0.55, 0.27, 0.07]),
    ("gray", [0.5, 0.5, 0.5]),
    ("yellow", [1.0, 1.0, 0.0]),
    ("orange", [1.0, 0.65, 0.0]),
    ("purple", [0.5, 0.0, 0.5]),
];

/// Normalized distance to the scene rectangle's edges below which an object
/// counts as sitting in a corner (both axes), and above which it counts as
/// being in the middle (both axes).
const CORNER_BAND: f64 = 0.2;
const MIDDLE_BAND: f64 = 0.3;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("category token {0:?} is not in the vocabulary's category family")]
    UnknownCategoryToken(String),
    #[error("shape token {0:?} is not in the vocabulary's shape family")]
    UnknownShapeToken(String),
    #[error("attribute token {token:?} is not in family {family}")]
    UnknownAttributeToken { family: String, token: String },
    #[error("relation token {0:?} is not in the vocabulary's relation family")]
    MissingRelationConcept(String),
    #[error("top_k = {top_k} exceeds the {categories} category concepts")]
    TopKTooLarge { top_k: usize, categories: usize },
    #[error(transparent)]
    Relation(#[from] RelationError),
}

/// How an attribute family's embedding is derived from a proposal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AttributeRule {
    /// Nearest named color to the mean RGB.
    Color,
    /// Weighted sum over the proposal's shape distribution.
    ShapeDistribution,
    /// Each token weighted by its within-category size superlative probability.
    SizeSuperlative { kinds: Vec<SizeKind> },
    /// Token copied from the proposal's `attrs` under this family name.
    PassThrough,
    /// corner / middle relative to the scene's footprint rectangle.
    RoomPosition,
    /// large / small relative to the median volume of the same category.
    RelativeSize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeSlot {
    pub family: String,
    #[serde(flatten)]
    pub rule: AttributeRule,
}

/// Ordered attribute families making up s^1..s^L.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyLayout {
    pub attributes: Vec<AttributeSlot>,
}

impl Default for PropertyLayout {
    fn default() -> Self {
        use AttributeRule::*;
        let slot = |family: &str, rule| AttributeSlot {
            family: family.to_string(),
            rule,
        };
        let sizes = |kinds: [SizeKind; 2]| SizeSuperlative { kinds: kinds.to_vec() };
        Self {
            attributes: vec![
                slot("color", Color),
                slot("shape", ShapeDistribution),
                slot("size", sizes([SizeKind::Biggest, SizeKind::Smallest])),
                slot("height", sizes([SizeKind::Tallest, SizeKind::Lowest])),
                slot("length", sizes([SizeKind::Longest, SizeKind::Shortest])),
                slot("width", sizes([SizeKind::Widest, SizeKind::Narrowest])),
                slot("material", PassThrough),
                slot("room_position", RoomPosition),
                slot("relative_size", RelativeSize),
            ],
        }
    }
}

impl PropertyLayout {
    /// L, the number of attribute families.
    pub fn attribute_count(&self) -> usize {
        self.attributes.len()
    }

    /// Family names for slots 0..=L, slot 0 being `category`.
    pub fn slot_names(&self) -> Vec<String> {
        std::iter::once("category".to_string())
            .chain(self.attributes.iter().map(|a| a.family.clone()))
            .collect()
    }

    /// Slot index (0 = category) of a vocabulary family.
    pub fn slot_of(&self, family: &Family) -> Option<usize> {
        match family {
            Family::Category => Some(0),
            Family::Relation => None,
            Family::Attribute(name) => self.attributes.iter().position(|a| &a.family == name).map(|i| i + 1),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    #[serde(default)]
    pub relations: RelationConfig,
    #[serde(default)]
    pub layout: PropertyLayout,
}

/// Tokens and weights that produced one property embedding; empty when the
/// family had no evidence.
pub type PropertyMeta = BTreeMap<String, f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub object_id: String,
    /// s^0..s^L
    pub embeddings: Vec<Embedding>,
    pub property_meta: Vec<PropertyMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub relation_probs: Vec<f64>,
    pub embedding: Embedding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneGraph {
    pub dim: usize,
    pub nodes: Vec<NodeState>,
    /// Edges with at least one nonzero relation, sorted by (source, target).
    pub edges: Vec<Edge>,
    /// Relation token for each entry of `Edge::relation_probs`.
    pub relation_tokens: Vec<String>,
    pub relation_kinds: Vec<String>,
    /// Family name for each node embedding slot.
    pub slot_names: Vec<String>,
}

impl SceneGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// L + 1
    pub fn slot_count(&self) -> usize {
        self.slot_names.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.object_id == id)
    }

    pub fn edge(&self, source: usize, target: usize) -> Option<&Edge> {
        self.edges
            .binary_search_by(|e| (e.source, e.target).cmp(&(source, target)))
            .ok()
            .map(|i| &self.edges[i])
    }
}

fn weighted_sum<'a>(
    vocab: &ConceptVocabulary,
    weights: impl IntoIterator<Item = (&'a String, &'a f64)>,
    family: &Family,
    unknown: impl Fn(&str) -> GraphError,
) -> Result<Embedding, GraphError> {
    let mut acc = embedding::zeros(vocab.dim());
    for (token, p) in weights {
        match vocab.get(token) {
            Some(c) if &c.family == family => embedding::add_scaled(&mut acc, *p, &c.embedding),
            _ => return Err(unknown(token)),
        }
    }
    Ok(acc)
}

/// s^0 = Σ_k P(k) c_k over the category concepts.
pub fn category_embedding(proposal: &ObjectProposal, vocab: &ConceptVocabulary) -> Result<Embedding, GraphError> {
    weighted_sum(vocab, &proposal.category_dist, &Family::Category, |t| {
        GraphError::UnknownCategoryToken(t.to_string())
    })
}

/// Named color closest (Euclidean RGB) to `rgb`, among colors the vocabulary
/// has concepts for. Ties break lexicographically.
pub fn nearest_color(rgb: [f64; 3], vocab: &ConceptVocabulary) -> Option<&'static str> {
    let family = Family::attribute("color");
    let mut best: Option<(&'static str, f64)> = None;
    for (name, reference) in NAMED_COLORS {
        if vocab.family_of(name) != Some(&family) {
            continue;
        }
        let d2: f64 = rgb.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
        best = match best {
            Some((bn, bd)) if d2 > bd || (d2 == bd && name > bn) => Some((bn, bd)),
            _ => Some((name, d2)),
        };
    }
    best.map(|(n, _)| n)
}

pub fn color_embedding(proposal: &ObjectProposal, vocab: &ConceptVocabulary) -> Embedding {
    nearest_color(proposal.mean_rgb, vocab)
        .and_then(|c| vocab.embedding(c).cloned())
        .unwrap_or_else(|| embedding::zeros(vocab.dim()))
}

/// Weighted sum over the shape distribution; zero vector when absent.
pub fn shape_embedding(proposal: &ObjectProposal, vocab: &ConceptVocabulary) -> Result<Embedding, GraphError> {
    match &proposal.shape_dist {
        Some(dist) => weighted_sum(vocab, dist, &Family::attribute("shape"), |t| {
            GraphError::UnknownShapeToken(t.to_string())
        }),
        None => Ok(embedding::zeros(vocab.dim())),
    }
}

fn size_weights(
    scene: &Scene,
    proposal: &ObjectProposal,
    kinds: &[SizeKind],
    top_k: usize,
) -> Result<Vec<(SizeKind, f64)>, GraphError> {
    kinds
        .iter()
        .map(|&k| Ok((k, size_superlative_probability(scene, &proposal.id, k, top_k)?)))
        .collect()
}

/// Σ over the family's superlative tokens of P(superlative) · e_token.
pub fn superlative_attr_embedding(
    scene: &Scene,
    proposal: &ObjectProposal,
    vocab: &ConceptVocabulary,
    family: &str,
    top_k: usize,
) -> Result<Embedding, GraphError> {
    let kinds: Vec<SizeKind> = SizeKind::ALL
        .into_iter()
        .filter(|k| k.default_binding().0 == family)
        .collect();
    let mut acc = embedding::zeros(vocab.dim());
    for (kind, p) in size_weights(scene, proposal, &kinds, top_k)? {
        if let Some(e) = vocab.embedding(kind.default_binding().1) {
            embedding::add_scaled(&mut acc, p, e);
        }
    }
    Ok(acc)
}

/// Scene footprint rectangle (xmin, xmax, ymin, ymax) over all box corners.
fn scene_rectangle(scene: &Scene) -> [f64; 4] {
    let mut r = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for p in &scene.proposals {
        for [x, y] in p.bbox.footprint() {
            r[0] = r[0].min(x);
            r[1] = r[1].max(x);
            r[2] = r[2].min(y);
            r[3] = r[3].max(y);
        }
    }
    r
}

pub fn room_position(scene: &Scene, proposal: &ObjectProposal) -> Option<&'static str> {
    let [x0, x1, y0, y1] = scene_rectangle(scene);
    let [cx, cy, _] = proposal.bbox.center;
    let rel = |c: f64, lo: f64, hi: f64| ((c - lo).min(hi - c) / (hi - lo)).max(0.0);
    let (u, v) = (rel(cx, x0, x1), rel(cy, y0, y1));
    if u <= CORNER_BAND && v <= CORNER_BAND {
        Some("corner")
    } else if u >= MIDDLE_BAND && v >= MIDDLE_BAND {
        Some("middle")
    } else {
        None
    }
}

pub fn relative_size(scene: &Scene, proposal: &ObjectProposal) -> Option<&'static str> {
    let category = proposal.argmax_category()?;
    let mut volumes: Vec<f64> = scene
        .proposals
        .iter()
        .filter(|p| p.argmax_category() == Some(category))
        .map(|p| p.bbox.volume())
        .collect();
    if volumes.len() < 2 {
        return None;
    }
    volumes.sort_by(|a, b| a.total_cmp(b));
    let n = volumes.len();
    let median = if n % 2 == 1 {
        volumes[n / 2]
    } else {
        0.5 * (volumes[n / 2 - 1] + volumes[n / 2])
    };
    let v = proposal.bbox.volume();
    if v > median {
        Some("large")
    } else if v < median {
        Some("small")
    } else {
        None
    }
}

fn single_token(
    vocab: &ConceptVocabulary,
    family: &str,
    token: Option<&str>,
) -> Result<(Embedding, PropertyMeta), GraphError> {
    let Some(token) = token else {
        return Ok((embedding::zeros(vocab.dim()), PropertyMeta::new()));
    };
    let fam = Family::attribute(family);
    match vocab.get(token) {
        Some(c) if c.family == fam => Ok((c.embedding.clone(), PropertyMeta::from([(token.to_string(), 1.0)]))),
        // the vocabulary has no such family at all: no evidence
        _ if !vocab.has_family(&fam) => Ok((embedding::zeros(vocab.dim()), PropertyMeta::new())),
        _ => Err(GraphError::UnknownAttributeToken {
            family: fam.to_string(),
            token: token.to_string(),
        }),
    }
}

fn attribute_property(
    scene: &Scene,
    proposal: &ObjectProposal,
    vocab: &ConceptVocabulary,
    slot: &AttributeSlot,
    top_k: usize,
) -> Result<(Embedding, PropertyMeta), GraphError> {
    let family = slot.family.as_str();
    match &slot.rule {
        AttributeRule::Color => single_token(vocab, family, nearest_color(proposal.mean_rgb, vocab)),
        AttributeRule::ShapeDistribution => match &proposal.shape_dist {
            Some(dist) if vocab.has_family(&Family::attribute(family)) => {
                let e = weighted_sum(vocab, dist, &Family::attribute(family), |t| {
                    GraphError::UnknownShapeToken(t.to_string())
                })?;
                Ok((e, dist.clone()))
            }
            _ => Ok((embedding::zeros(vocab.dim()), PropertyMeta::new())),
        },
        AttributeRule::SizeSuperlative { kinds } => {
            let mut acc = embedding::zeros(vocab.dim());
            let mut meta = PropertyMeta::new();
            for (kind, p) in size_weights(scene, proposal, kinds, top_k)? {
                let token = kind.default_binding().1;
                if let Some(e) = vocab.embedding(token) {
                    embedding::add_scaled(&mut acc, p, e);
                    if p != 0.0 {
                        meta.insert(token.to_string(), p);
                    }
                }
            }
            Ok((acc, meta))
        }
        AttributeRule::PassThrough => {
            single_token(vocab, family, proposal.extra_attrs.get(family).map(String::as_str))
        }
        AttributeRule::RoomPosition => single_token(vocab, family, room_position(scene, proposal)),
        AttributeRule::RelativeSize => single_token(vocab, family, relative_size(scene, proposal)),
    }
}

fn build_node(
    scene: &Scene,
    proposal: &ObjectProposal,
    vocab: &ConceptVocabulary,
    config: &GraphConfig,
) -> Result<NodeState, GraphError> {
    let mut embeddings = Vec::with_capacity(config.layout.attribute_count() + 1);
    let mut property_meta = Vec::with_capacity(embeddings.capacity());
    embeddings.push(category_embedding(proposal, vocab)?);
    property_meta.push(
        proposal
            .category_dist
            .iter()
            .filter(|(_, p)| **p != 0.0)
            .map(|(t, p)| (t.clone(), *p))
            .collect(),
    );
    for slot in &config.layout.attributes {
        let (e, meta) = attribute_property(scene, proposal, vocab, slot, config.relations.top_k)?;
        embeddings.push(e);
        property_meta.push(meta);
    }
    Ok(NodeState {
        object_id: proposal.id.clone(),
        embeddings,
        property_meta,
    })
}

/// Builds nodes and edges for a scene. Output is deterministic.
pub fn build_scene_graph(
    scene: &Scene,
    vocab: &ConceptVocabulary,
    config: &GraphConfig,
) -> Result<SceneGraph, GraphError> {
    config.relations.validate()?;
    let categories = vocab.categories().len();
    if config.relations.top_k > categories {
        return Err(GraphError::TopKTooLarge {
            top_k: config.relations.top_k,
            categories,
        });
    }
    let relation_embeddings: Vec<&Embedding> = config
        .relations
        .relation_set
        .iter()
        .map(|b| match vocab.get(&b.token) {
            Some(c) if c.family == Family::Relation => Ok(&c.embedding),
            _ => Err(GraphError::MissingRelationConcept(b.token.clone())),
        })
        .collect::<Result<_, _>>()?;

    let nodes = scene
        .proposals
        .par_iter()
        .map(|p| build_node(scene, p, vocab, config))
        .collect::<Result<Vec<_>, _>>()?;

    let matrix = build_relation_matrix(scene, &config.relations)?;
    let n = scene.len();
    let mut edges = Vec::new();
    for z in 0..n {
        for x in 0..n {
            if z == x {
                continue;
            }
            let probs = matrix.pair(z, x);
            if probs.iter().all(|p| *p == 0.0) {
                continue;
            }
            let mut e = embedding::zeros(vocab.dim());
            for (p, rel) in probs.iter().zip(&relation_embeddings) {
                if *p != 0.0 {
                    embedding::add_scaled(&mut e, *p, rel);
                }
            }
            edges.push(Edge {
                source: z,
                target: x,
                relation_probs: probs.to_vec(),
                embedding: e,
            });
        }
    }

    Ok(SceneGraph {
        dim: vocab.dim(),
        nodes,
        edges,
        relation_tokens: config.relations.relation_set.iter().map(|b| b.token.clone()).collect(),
        relation_kinds: config.relations.kinds().map(|k| k.name().to_string()).collect(),
        slot_names: config.layout.slot_names(),
    })
}

/// JSON form of a graph; the golden-file format for graph tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub slots: Vec<String>,
    pub relations: Vec<String>,
    pub nodes: Vec<NodeDocument>,
    pub edges: Vec<EdgeDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDocument {
    pub id: String,
    /// family -> token -> weight
    pub properties: BTreeMap<String, PropertyMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<Vec<Embedding>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDocument {
    pub z: String,
    pub x: String,
    /// relation kind -> R^j
    pub relations: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Embedding>,
}

impl SceneGraph {
    pub fn to_document(&self, with_embeddings: bool) -> GraphDocument {
        GraphDocument {
            slots: self.slot_names.clone(),
            relations: self.relation_tokens.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDocument {
                    id: n.object_id.clone(),
                    properties: self
                        .slot_names
                        .iter()
                        .cloned()
                        .zip(n.property_meta.iter().cloned())
                        .filter(|(_, m)| !m.is_empty())
                        .collect(),
                    embeddings: with_embeddings.then(|| n.embeddings.clone()),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDocument {
                    z: self.nodes[e.source].object_id.clone(),
                    x: self.nodes[e.target].object_id.clone(),
                    relations: self
                        .relation_kinds
                        .iter()
                        .cloned()
                        .zip(e.relation_probs.iter().copied())
                        .collect(),
                    embedding: with_embeddings.then(|| e.embedding.clone()),
                })
                .collect(),
        }
    }

    pub fn to_json(&self, with_embeddings: bool) -> String {
        serde_json::to_string_pretty(&self.to_document(with_embeddings)).expect("graph serializes")
    }
}
