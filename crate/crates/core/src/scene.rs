//! Scene data model: object proposals with oriented boxes, mean color and a
//! category distribution. World frame is z-up; boxes rotate about z only.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on distribution mass: sums within this of 1 are renormalized.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;
/// Sums already this close to 1 are left untouched (keeps load idempotent).
const RENORMALIZE_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("proposal {0:?} has an invalid probability distribution")]
    DistributionInvalid(String),
    #[error("duplicate proposal id {0:?}")]
    DuplicateProposalId(String),
    #[error("proposal {0:?} has no ground-truth category")]
    MissingGroundTruth(String),
    #[error("proportion {0} is outside [0, 1]")]
    InvalidProportion(f64),
    #[error("no alternative category available to misassign {0:?}")]
    NoAlternativeCategory(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SceneError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        SceneError::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub center: [f64; 3],
    /// Full side lengths along the box's local x, y and the world z axis.
    pub extents: [f64; 3],
    pub yaw: f64,
}

impl BoundingBox {
    pub fn axis_aligned(center: [f64; 3], extents: [f64; 3]) -> Self {
        Self {
            center,
            extents,
            yaw: 0.0,
        }
    }

    pub fn bottom(&self) -> f64 {
        self.center[2] - 0.5 * self.extents[2]
    }

    pub fn top(&self) -> f64 {
        self.center[2] + 0.5 * self.extents[2]
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn diagonal(&self) -> f64 {
        self.extents.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn height(&self) -> f64 {
        self.extents[2]
    }

    /// Longer horizontal side.
    pub fn length(&self) -> f64 {
        self.extents[0].max(self.extents[1])
    }

    /// Shorter horizontal side.
    pub fn width(&self) -> f64 {
        self.extents[0].min(self.extents[1])
    }

    pub fn footprint_area(&self) -> f64 {
        self.extents[0] * self.extents[1]
    }

    /// Footprint corners in counter-clockwise order.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hx = 0.5 * self.extents[0];
        let hy = 0.5 * self.extents[1];
        let local = [[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]];
        local.map(|[x, y]| [self.center[0] + c * x - s * y, self.center[1] + s * x + c * y])
    }

    pub fn distance(&self, other: &BoundingBox) -> f64 {
        self.center
            .iter()
            .zip(other.center.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectProposal {
    pub id: String,
    pub bbox: BoundingBox,
    pub mean_rgb: [f64; 3],
    pub category_dist: BTreeMap<String, f64>,
    pub shape_dist: Option<BTreeMap<String, f64>>,
    /// Pass-through attribute tokens keyed by family name (e.g. `material`).
    pub extra_attrs: BTreeMap<String, String>,
}

impl ObjectProposal {
    pub fn category_prob(&self, token: &str) -> f64 {
        self.category_dist.get(token).copied().unwrap_or(0.0)
    }

    /// Most probable category; ties go to the smaller token.
    pub fn argmax_category(&self) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (t, p) in &self.category_dist {
            if best.is_none_or(|(_, bp)| *p > bp) {
                best = Some((t, *p));
            }
        }
        best.map(|(t, _)| t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub id: String,
    pub proposals: Vec<ObjectProposal>,
    /// proposal id -> ground-truth category token
    pub ground_truth: BTreeMap<String, String>,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.proposals.iter().position(|p| p.id == id)
    }

    pub fn proposal(&self, id: &str) -> Option<&ObjectProposal> {
        self.proposals.iter().find(|p| p.id == id)
    }

    /// Sorted union of every category token mentioned by the scene.
    pub fn category_pool(&self) -> Vec<String> {
        let mut pool: BTreeSet<&str> = BTreeSet::new();
        for p in &self.proposals {
            pool.extend(p.category_dist.keys().map(String::as_str));
        }
        pool.extend(self.ground_truth.values().map(String::as_str));
        pool.into_iter().map(str::to_string).collect()
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        load_scene(text)
    }

    pub fn to_document(&self) -> SceneDocument {
        SceneDocument {
            id: self.id.clone(),
            objects: self
                .proposals
                .iter()
                .map(|p| ObjectDocument {
                    id: p.id.clone(),
                    center: p.bbox.center,
                    extents: p.bbox.extents,
                    yaw: p.bbox.yaw,
                    mean_rgb: p.mean_rgb,
                    category_dist: p.category_dist.clone(),
                    shape_dist: p.shape_dist.clone(),
                    attrs: (!p.extra_attrs.is_empty()).then(|| p.extra_attrs.clone()),
                    gt_category: self.ground_truth.get(&p.id).cloned(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("scene serializes")
    }
}

/// Wire form of a scene file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneDocument {
    pub id: String,
    pub objects: Vec<ObjectDocument>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObjectDocument {
    pub id: String,
    pub center: [f64; 3],
    pub extents: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    pub mean_rgb: [f64; 3],
    pub category_dist: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_dist: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrs: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_category: Option<String>,
}

fn check_distribution(id: &str, dist: &mut BTreeMap<String, f64>) -> Result<(), SceneError> {
    if dist.is_empty() || dist.values().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(SceneError::DistributionInvalid(id.to_string()));
    }
    let total: f64 = dist.values().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(SceneError::DistributionInvalid(id.to_string()));
    }
    if (total - 1.0).abs() > RENORMALIZE_SLACK {
        dist.values_mut().for_each(|p| *p /= total);
    }
    Ok(())
}

fn check_triplet(path: String, values: &[f64; 3], ok: impl Fn(f64) -> bool, what: &str) -> Result<(), SceneError> {
    if values.iter().all(|v| v.is_finite() && ok(*v)) {
        Ok(())
    } else {
        Err(SceneError::schema(path, what))
    }
}

/// Validates a parsed scene document.
pub fn scene_from_document(doc: SceneDocument) -> Result<Scene, SceneError> {
    if doc.objects.is_empty() {
        return Err(SceneError::schema("objects", "scene must contain at least one object"));
    }
    let mut seen = HashSet::new();
    let mut proposals = Vec::with_capacity(doc.objects.len());
    let mut ground_truth = BTreeMap::new();
    for (i, obj) in doc.objects.into_iter().enumerate() {
        let at = |field: &str| format!("objects[{i}].{field}");
        if obj.id.is_empty() {
            return Err(SceneError::schema(at("id"), "empty id"));
        }
        if !seen.insert(obj.id.clone()) {
            return Err(SceneError::DuplicateProposalId(obj.id));
        }
        check_triplet(at("center"), &obj.center, |_| true, "non-finite coordinate")?;
        check_triplet(at("extents"), &obj.extents, |v| v > 0.0, "extents must be strictly positive")?;
        check_triplet(at("mean_rgb"), &obj.mean_rgb, |v| (0.0..=1.0).contains(&v), "color channels must lie in [0, 1]")?;
        if !obj.yaw.is_finite() || !(-PI..=PI).contains(&obj.yaw) {
            return Err(SceneError::schema(at("yaw"), "yaw must lie in [-pi, pi]"));
        }
        let mut category_dist = obj.category_dist;
        check_distribution(&obj.id, &mut category_dist)?;
        let shape_dist = match obj.shape_dist {
            Some(mut d) => {
                check_distribution(&obj.id, &mut d)?;
                Some(d)
            }
            None => None,
        };
        if let Some(gt) = obj.gt_category {
            if gt.is_empty() {
                return Err(SceneError::schema(at("gt_category"), "empty token"));
            }
            ground_truth.insert(obj.id.clone(), gt);
        }
        proposals.push(ObjectProposal {
            id: obj.id,
            bbox: BoundingBox {
                center: obj.center,
                extents: obj.extents,
                yaw: obj.yaw,
            },
            mean_rgb: obj.mean_rgb,
            category_dist,
            shape_dist,
            extra_attrs: obj.attrs.unwrap_or_default(),
        });
    }
    Ok(Scene {
        id: doc.id,
        proposals,
        ground_truth,
    })
}

/// Parses and validates a scene JSON document.
pub fn load_scene(text: &str) -> Result<Scene, SceneError> {
    let doc: SceneDocument = serde_json::from_str(text).map_err(|e| {
        SceneError::schema(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    scene_from_document(doc)
}

pub fn load_scene_file(path: &std::path::Path) -> Result<Scene, SceneError> {
    load_scene(&std::fs::read_to_string(path)?)
}

/// Replaces category distributions with one-hots: a seeded random
/// `round(proportion * N)` subset (round half up) gets its ground-truth
/// category, every other proposal a uniformly drawn wrong category from the
/// scene's own category pool.
pub fn apply_ground_truth(scene: &Scene, proportion: f64, seed: u64) -> Result<Scene, SceneError> {
    let pool = scene.category_pool();
    apply_ground_truth_with_pool(scene, proportion, seed, &pool)
}

/// [`apply_ground_truth`] with an explicit category pool for misassignment.
pub fn apply_ground_truth_with_pool(
    scene: &Scene,
    proportion: f64,
    seed: u64,
    pool: &[String],
) -> Result<Scene, SceneError> {
    if !(0.0..=1.0).contains(&proportion) {
        return Err(SceneError::InvalidProportion(proportion));
    }
    for p in &scene.proposals {
        if !scene.ground_truth.contains_key(&p.id) {
            return Err(SceneError::MissingGroundTruth(p.id.clone()));
        }
    }
    let mut pool: Vec<&str> = pool.iter().map(String::as_str).collect();
    pool.sort_unstable();
    pool.dedup();

    let n = scene.len();
    let correct_count = ((proportion * n as f64) + 0.5).floor() as usize;
    let correct_count = correct_count.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correct = vec![false; n];
    for i in sample(&mut rng, n, correct_count).iter() {
        correct[i] = true;
    }

    let mut out = scene.clone();
    for (i, p) in out.proposals.iter_mut().enumerate() {
        let gt = &scene.ground_truth[&p.id];
        let token = if correct[i] {
            gt.clone()
        } else {
            let wrong: Vec<&str> = pool.iter().copied().filter(|t| t != gt).collect();
            if wrong.is_empty() {
                return Err(SceneError::NoAlternativeCategory(p.id.clone()));
            }
            wrong[rng.gen_range(0..wrong.len())].to_string()
        };
        p.category_dist = BTreeMap::from([(token, 1.0)]);
    }
    Ok(out)
}
