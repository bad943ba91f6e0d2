//! Pairwise spatial relations between object proposals.
//!
//! Every relation is evaluated for an ordered pair (anchor `z`, target `x`)
//! and read as "x relation z", with one exception fixed by the support pair:
//! `supporting(z, x)` holds when z supports x (x rests on z) and
//! `supported-by(z, x)` when z rests on x. Converse pairs satisfy
//! `above(z,x) = below(x,z)` and `supporting(z,x) = supported-by(x,z)`.
//!
//! Deterministic kinds come from box geometry and take values in {0, 1};
//! `farthest` / `closest` are category-conditional probabilities (see
//! [`superlative`]).

pub mod geometry;
pub mod superlative;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::Scene;

pub use superlative::{
    size_superlative_probability, size_superlative_probability_enumerated, superlative_probability,
    superlative_probability_enumerated, superlative_probability_montecarlo, CategoryTable, MonteCarloEstimate,
    SizeKind, SuperlativeKind,
};

/// Box diagonal (m) at which `support_gap` applies unscaled.
pub const REFERENCE_DIAGONAL: f64 = 1.0;
/// Vertical contact tolerance as a fraction of the median object diagonal.
const CONTACT_TOLERANCE: f64 = 1e-6;
/// Largest scene accepted by the power-set oracle.
pub const MAX_ENUMERATED_OBJECTS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum RelationError {
    #[error("unknown object id {0:?}")]
    UnknownId(String),
    #[error("relation requires distinct objects, got {0:?} twice")]
    SameObject(String),
    #[error("power-set enumeration over {0} objects is too large (max {MAX_ENUMERATED_OBJECTS})")]
    TooLarge(usize),
    #[error("need at least one sample")]
    NoSamples,
    #[error("invalid relation config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationKind {
    Above,
    Below,
    Supporting,
    SupportedBy,
    Near,
    Front,
    Behind,
    Beside,
    Farthest,
    Closest,
}

impl RelationKind {
    pub const ALL: [RelationKind; 10] = [
        RelationKind::Above,
        RelationKind::Below,
        RelationKind::Supporting,
        RelationKind::SupportedBy,
        RelationKind::Near,
        RelationKind::Front,
        RelationKind::Behind,
        RelationKind::Beside,
        RelationKind::Farthest,
        RelationKind::Closest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::Above => "above",
            RelationKind::Below => "below",
            RelationKind::Supporting => "supporting",
            RelationKind::SupportedBy => "supported-by",
            RelationKind::Near => "near",
            RelationKind::Front => "front",
            RelationKind::Behind => "behind",
            RelationKind::Beside => "beside",
            RelationKind::Farthest => "farthest",
            RelationKind::Closest => "closest",
        }
    }

    pub fn is_superlative(self) -> bool {
        matches!(self, RelationKind::Farthest | RelationKind::Closest)
    }

    /// Utterance phrase for "x <phrase> z" in the built-in vocabulary.
    pub fn default_token(self) -> &'static str {
        match self {
            RelationKind::Above => "above",
            RelationKind::Below => "below",
            RelationKind::Supporting => "on",
            RelationKind::SupportedBy => "supporting",
            RelationKind::Near => "near",
            RelationKind::Front => "in front of",
            RelationKind::Behind => "behind",
            RelationKind::Beside => "next to",
            RelationKind::Farthest => "farthest from",
            RelationKind::Closest => "closest to",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationKind {
    type Err = RelationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| RelationError::InvalidConfig(format!("unknown relation kind {s:?}")))
    }
}

/// A relation type together with the concept token that embeds it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationBinding {
    pub kind: RelationKind,
    pub token: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationConfig {
    pub relation_set: Vec<RelationBinding>,
    /// near/beside: center distance <= near_factor * mean of the two diagonals
    pub near_factor: f64,
    /// Max support surface gap (m) for a reference-size scene; scaled by the
    /// median object diagonal.
    pub support_gap: f64,
    /// Minimal footprint IoU for above/below/support.
    pub overlap_min: f64,
    /// Categories considered per object for superlatives.
    pub top_k: usize,
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self {
            relation_set: RelationKind::ALL
                .into_iter()
                .map(|kind| RelationBinding {
                    kind,
                    token: kind.default_token().to_string(),
                })
                .collect(),
            near_factor: 1.5,
            support_gap: 0.05,
            overlap_min: 0.2,
            top_k: 2,
        }
    }
}

impl RelationConfig {
    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = k;
        self
    }

    pub fn validate(&self) -> Result<(), RelationError> {
        if self.relation_set.is_empty() {
            return Err(RelationError::InvalidConfig("relation_set is empty".into()));
        }
        for (i, b) in self.relation_set.iter().enumerate() {
            if self.relation_set[..i].iter().any(|o| o.kind == b.kind || o.token == b.token) {
                return Err(RelationError::InvalidConfig(format!("duplicate binding for {}", b.kind)));
            }
        }
        if !self.near_factor.is_finite() || self.near_factor <= 0.0 {
            return Err(RelationError::InvalidConfig("near_factor must be positive".into()));
        }
        if self.support_gap.is_nan() || self.support_gap < 0.0 {
            return Err(RelationError::InvalidConfig("support_gap must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap_min) {
            return Err(RelationError::InvalidConfig("overlap_min must lie in [0, 1]".into()));
        }
        if self.top_k == 0 {
            return Err(RelationError::InvalidConfig("top_k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn kinds(&self) -> impl Iterator<Item = RelationKind> + '_ {
        self.relation_set.iter().map(|b| b.kind)
    }
}

/// Scene-level quantities the geometric rules are normalized by.
#[derive(Clone, Copy, Debug)]
pub struct SceneScale {
    pub median_diagonal: f64,
}

impl SceneScale {
    pub fn of(scene: &Scene) -> Self {
        let mut diags: Vec<f64> = scene.proposals.iter().map(|p| p.bbox.diagonal()).collect();
        diags.sort_by(|a, b| a.total_cmp(b));
        let n = diags.len();
        let median_diagonal = if n == 0 {
            REFERENCE_DIAGONAL
        } else if n % 2 == 1 {
            diags[n / 2]
        } else {
            0.5 * (diags[n / 2 - 1] + diags[n / 2])
        };
        Self { median_diagonal }
    }

    fn support_gap(&self, config: &RelationConfig) -> f64 {
        config.support_gap * self.median_diagonal / REFERENCE_DIAGONAL
    }

    fn contact_tolerance(&self) -> f64 {
        CONTACT_TOLERANCE * self.median_diagonal
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceComparison {
    Farther,
    Closer,
}

fn lookup(scene: &Scene, id: &str) -> Result<usize, RelationError> {
    scene.index_of(id).ok_or_else(|| RelationError::UnknownId(id.to_string()))
}

/// Whether x is strictly farther (closer) from z than y is. Exact ties give 0.
pub fn indicator_closer(
    scene: &Scene,
    z: &str,
    x: &str,
    y: &str,
    kind: DistanceComparison,
) -> Result<u8, RelationError> {
    let (zi, xi, yi) = (lookup(scene, z)?, lookup(scene, x)?, lookup(scene, y)?);
    if zi == xi || zi == yi || xi == yi {
        let dup = if zi == xi || zi == yi { z } else { x };
        return Err(RelationError::SameObject(dup.to_string()));
    }
    Ok(distance_indicator(scene, zi, xi, yi, kind) as u8)
}

pub(crate) fn distance_indicator(scene: &Scene, z: usize, x: usize, y: usize, kind: DistanceComparison) -> bool {
    let anchor = &scene.proposals[z].bbox;
    let dx = anchor.distance(&scene.proposals[x].bbox);
    let dy = anchor.distance(&scene.proposals[y].bbox);
    match kind {
        DistanceComparison::Farther => dx > dy,
        DistanceComparison::Closer => dx < dy,
    }
}

/// Evaluates one deterministic relation kind for indices (z, x).
pub(crate) fn geometric_relation(
    scene: &Scene,
    scale: &SceneScale,
    config: &RelationConfig,
    kind: RelationKind,
    z: usize,
    x: usize,
) -> bool {
    let zb = &scene.proposals[z].bbox;
    let xb = &scene.proposals[x].bbox;
    let tol = scale.contact_tolerance();
    let overlapping = || geometry::footprint_iou(zb, xb) >= config.overlap_min;
    let near = || zb.distance(xb) <= config.near_factor * 0.5 * (zb.diagonal() + xb.diagonal());
    match kind {
        // x above z: x's bottom at or over z's top
        RelationKind::Above => xb.bottom() - zb.top() >= -tol && overlapping(),
        RelationKind::Below => zb.bottom() - xb.top() >= -tol && overlapping(),
        RelationKind::Supporting => {
            let gap = xb.bottom() - zb.top();
            gap >= -tol && gap <= scale.support_gap(config) + tol && overlapping()
        }
        RelationKind::SupportedBy => {
            let gap = zb.bottom() - xb.top();
            gap >= -tol && gap <= scale.support_gap(config) + tol && overlapping()
        }
        RelationKind::Near => near(),
        RelationKind::Front | RelationKind::Behind => {
            let (long, lat) = geometry::local_offset(zb, xb);
            let ahead = if kind == RelationKind::Front { long > 0.0 } else { long < 0.0 };
            ahead && lat.abs() < long.abs()
        }
        RelationKind::Beside => {
            let (long, lat) = geometry::local_offset(zb, xb);
            near() && lat.abs() >= long.abs() && !overlapping()
        }
        RelationKind::Farthest | RelationKind::Closest => false,
    }
}

/// Deterministic (non-superlative) relations of the configured set for the
/// ordered pair (z, x), as 0/1 values keyed by kind.
pub fn geometric_relations(
    scene: &Scene,
    config: &RelationConfig,
    z: &str,
    x: &str,
) -> Result<BTreeMap<RelationKind, f64>, RelationError> {
    let (zi, xi) = (lookup(scene, z)?, lookup(scene, x)?);
    if zi == xi {
        return Err(RelationError::SameObject(z.to_string()));
    }
    let scale = SceneScale::of(scene);
    Ok(config
        .kinds()
        .filter(|k| !k.is_superlative())
        .map(|k| (k, if geometric_relation(scene, &scale, config, k, zi, xi) { 1.0 } else { 0.0 }))
        .collect())
}

/// Dense R^j(z, x) for every ordered pair and every configured relation type.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationMatrix {
    n: usize,
    kinds: Vec<RelationKind>,
    values: Vec<f64>,
}

impl RelationMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn kinds(&self) -> &[RelationKind] {
        &self.kinds
    }

    /// Probabilities of every relation type for source `z`, target `x`.
    pub fn pair(&self, z: usize, x: usize) -> &[f64] {
        let t = self.kinds.len();
        let start = (z * self.n + x) * t;
        &self.values[start..start + t]
    }

    pub fn get(&self, z: usize, x: usize, kind: RelationKind) -> Option<f64> {
        let j = self.kinds.iter().position(|k| *k == kind)?;
        Some(self.pair(z, x)[j])
    }
}

/// Evaluates every configured relation for every ordered pair. Rows are
/// computed in parallel; the result does not depend on scheduling.
pub fn build_relation_matrix(scene: &Scene, config: &RelationConfig) -> Result<RelationMatrix, RelationError> {
    config.validate()?;
    let n = scene.len();
    let kinds: Vec<RelationKind> = config.kinds().collect();
    let scale = SceneScale::of(scene);
    let table = CategoryTable::new(scene).truncated(config.top_k);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|z| {
            let mut row = Vec::with_capacity(n * kinds.len());
            for x in 0..n {
                for &kind in &kinds {
                    let v = if z == x {
                        0.0
                    } else if let Some(sk) = SuperlativeKind::from_relation(kind) {
                        table.distance_superlative(scene, z, x, sk)
                    } else if geometric_relation(scene, &scale, config, kind, z, x) {
                        1.0
                    } else {
                        0.0
                    };
                    row.push(v);
                }
            }
            row
        })
        .collect();
    Ok(RelationMatrix {
        n,
        kinds,
        values: rows.concat(),
    })
}
