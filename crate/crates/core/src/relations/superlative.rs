//! Category-conditional superlatives ("the chair farthest from the door",
//! "the biggest box").
//!
//! For target x and category k, with competitors 𝒩 (every object other than
//! x and the anchor z):
//!
//! ```text
//! r_k(x) = P_x(k) · Π_{y∈𝒩} [ beats(x, y) · P_y(k) + (1 − P_y(k)) ]
//! R(x)   = Σ_{k ∈ topK(x)} r_k(x)
//! ```
//!
//! i.e. the probability that x has category k and beats every competitor that
//! also has category k. Category distributions are truncated to each object's
//! own top-K categories; truncated mass counts as "not category k".
//!
//! Three evaluators are provided: the product form above, a literal sum over
//! the power set of 𝒩, and a Monte-Carlo sampler over the untruncated
//! distributions. The latter two exist to cross-check the first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{distance_indicator, DistanceComparison, RelationError, RelationKind, MAX_ENUMERATED_OBJECTS};
use crate::scene::{BoundingBox, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SuperlativeKind {
    Farthest,
    Closest,
}

impl SuperlativeKind {
    pub fn from_relation(kind: RelationKind) -> Option<Self> {
        match kind {
            RelationKind::Farthest => Some(SuperlativeKind::Farthest),
            RelationKind::Closest => Some(SuperlativeKind::Closest),
            _ => None,
        }
    }

    fn comparison(self) -> DistanceComparison {
        match self {
            SuperlativeKind::Farthest => DistanceComparison::Farther,
            SuperlativeKind::Closest => DistanceComparison::Closer,
        }
    }
}

impl std::str::FromStr for SuperlativeKind {
    type Err = RelationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "farthest" => Ok(SuperlativeKind::Farthest),
            "closest" => Ok(SuperlativeKind::Closest),
            _ => Err(RelationError::InvalidConfig(format!("unknown superlative {s:?}"))),
        }
    }
}

/// Global size comparisons within a category (no anchor).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeKind {
    Biggest,
    Smallest,
    Tallest,
    Lowest,
    Longest,
    Shortest,
    Widest,
    Narrowest,
}

impl SizeKind {
    pub const ALL: [SizeKind; 8] = [
        SizeKind::Biggest,
        SizeKind::Smallest,
        SizeKind::Tallest,
        SizeKind::Lowest,
        SizeKind::Longest,
        SizeKind::Shortest,
        SizeKind::Widest,
        SizeKind::Narrowest,
    ];

    /// Box measure compared by this kind: volume, height, longer or shorter
    /// horizontal side.
    pub fn measure(self, b: &BoundingBox) -> f64 {
        match self {
            SizeKind::Biggest | SizeKind::Smallest => b.volume(),
            SizeKind::Tallest | SizeKind::Lowest => b.height(),
            SizeKind::Longest | SizeKind::Shortest => b.length(),
            SizeKind::Widest | SizeKind::Narrowest => b.width(),
        }
    }

    fn prefers_larger(self) -> bool {
        matches!(self, SizeKind::Biggest | SizeKind::Tallest | SizeKind::Longest | SizeKind::Widest)
    }

    /// Strict comparison: does `a` beat `b` under this kind?
    pub fn beats(self, a: &BoundingBox, b: &BoundingBox) -> bool {
        let (ma, mb) = (self.measure(a), self.measure(b));
        if self.prefers_larger() {
            ma > mb
        } else {
            ma < mb
        }
    }

    /// Attribute family and concept token in the built-in vocabulary.
    pub fn default_binding(self) -> (&'static str, &'static str) {
        match self {
            SizeKind::Biggest => ("size", "biggest"),
            SizeKind::Smallest => ("size", "smallest"),
            SizeKind::Tallest => ("height", "tallest"),
            SizeKind::Lowest => ("height", "lowest"),
            SizeKind::Longest => ("length", "longest"),
            SizeKind::Shortest => ("length", "shortest"),
            SizeKind::Widest => ("width", "widest"),
            SizeKind::Narrowest => ("width", "narrowest"),
        }
    }
}

impl std::str::FromStr for SizeKind {
    type Err = RelationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SizeKind::ALL
            .into_iter()
            .find(|k| k.default_binding().1 == s)
            .ok_or_else(|| RelationError::InvalidConfig(format!("unknown size superlative {s:?}")))
    }
}

/// Dense category probabilities over the scene's sorted category pool,
/// truncated per object to its top-K categories.
#[derive(Clone, Debug)]
pub struct CategoryTable {
    pub categories: Vec<String>,
    probs: Vec<Vec<f64>>,
}

/// Indices of the `k` largest entries; ties go to the lower index.
pub fn top_k_indices(probs: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

impl CategoryTable {
    /// Untruncated table.
    pub fn new(scene: &Scene) -> Self {
        let categories = scene.category_pool();
        let probs = scene
            .proposals
            .iter()
            .map(|p| categories.iter().map(|c| p.category_prob(c)).collect())
            .collect();
        Self { categories, probs }
    }

    pub fn truncated(&self, k: usize) -> Self {
        let probs = self
            .probs
            .iter()
            .map(|row| {
                let mut out = vec![0.0; row.len()];
                for i in top_k_indices(row, k) {
                    out[i] = row[i];
                }
                out
            })
            .collect();
        Self {
            categories: self.categories.clone(),
            probs,
        }
    }

    pub fn row(&self, object: usize) -> &[f64] {
        &self.probs[object]
    }

    fn product_form<F: Fn(usize) -> bool>(&self, x: usize, competitors: &[usize], beats: F) -> f64 {
        let beat: Vec<bool> = competitors.iter().map(|&y| beats(y)).collect();
        let mut total = 0.0;
        for (k, &pxk) in self.probs[x].iter().enumerate() {
            if pxk == 0.0 {
                continue;
            }
            let mut r = pxk;
            for (&y, &b) in competitors.iter().zip(&beat) {
                let pyk = self.probs[y][k];
                r *= (if b { pyk } else { 0.0 }) + (1.0 - pyk);
            }
            total += r;
        }
        // summation can overshoot 1 by an ulp
        total.clamp(0.0, 1.0)
    }

    /// Superlative probability for x relative to anchor z, using this
    /// table's rows as given (truncate first). Indices must be distinct.
    pub fn distance_superlative(&self, scene: &Scene, z: usize, x: usize, kind: SuperlativeKind) -> f64 {
        let competitors = in_id_order(scene, (0..scene.len()).filter(|&y| y != z && y != x));
        self.product_form(x, &competitors, |y| distance_indicator(scene, z, x, y, kind.comparison()))
    }
}

fn pair_indices(scene: &Scene, z: &str, x: &str) -> Result<(usize, usize), RelationError> {
    let zi = scene.index_of(z).ok_or_else(|| RelationError::UnknownId(z.to_string()))?;
    let xi = scene.index_of(x).ok_or_else(|| RelationError::UnknownId(x.to_string()))?;
    if zi == xi {
        return Err(RelationError::SameObject(z.to_string()));
    }
    Ok((zi, xi))
}

/// Probability that x is the farthest (closest) object from z within its
/// category, summed over x's top-K categories (product form).
pub fn superlative_probability(
    scene: &Scene,
    z: &str,
    x: &str,
    kind: SuperlativeKind,
    k: usize,
) -> Result<f64, RelationError> {
    let (zi, xi) = pair_indices(scene, z, x)?;
    Ok(CategoryTable::new(scene).truncated(k).distance_superlative(scene, zi, xi, kind))
}

/// Σ over subsets Y of the competitors of
/// Π_{y∈Y} beats(y)·P_y(k) · Π_{ȳ∉Y} (1 − P_ȳ(k)), then Σ_k P_x(k)·(…).
fn power_set_sum<F: Fn(usize) -> bool>(table: &CategoryTable, x: usize, competitors: &[usize], beats: F) -> f64 {
    let m = competitors.len();
    let mut total = 0.0;
    for k in 0..table.categories.len() {
        let pxk = table.probs[x][k];
        if pxk == 0.0 {
            continue;
        }
        let mut subset_sum = 0.0;
        for mask in 0u32..(1u32 << m) {
            let mut term = 1.0;
            for (bit, &y) in competitors.iter().enumerate() {
                let pyk = table.probs[y][k];
                if mask & (1 << bit) != 0 {
                    term *= (if beats(y) { 1.0 } else { 0.0 }) * pyk;
                } else {
                    term *= 1.0 - pyk;
                }
            }
            subset_sum += term;
        }
        total += pxk * subset_sum;
    }
    total
}

/// Literal power-set evaluation of the superlative probability. Exponential
/// in N; limited to [`MAX_ENUMERATED_OBJECTS`].
pub fn superlative_probability_enumerated(
    scene: &Scene,
    z: &str,
    x: &str,
    kind: SuperlativeKind,
    k: usize,
) -> Result<f64, RelationError> {
    if scene.len() > MAX_ENUMERATED_OBJECTS {
        return Err(RelationError::TooLarge(scene.len()));
    }
    let (zi, xi) = pair_indices(scene, z, x)?;
    let table = CategoryTable::new(scene).truncated(k);
    let competitors: Vec<usize> = (0..scene.len()).filter(|&y| y != zi && y != xi).collect();
    Ok(power_set_sum(&table, xi, &competitors, |y| {
        distance_indicator(scene, zi, xi, y, kind.comparison())
    }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

fn sample_category(rng: &mut ChaCha8Rng, row: &[f64]) -> Option<usize> {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(k);
        }
    }
    // u landed in rounding slack at the top; take the last category with mass
    row.iter().rposition(|p| *p > 0.0)
}

/// Samples category assignments from the untruncated distributions and counts
/// how often x wins within its sampled category.
pub fn superlative_probability_montecarlo(
    scene: &Scene,
    z: &str,
    x: &str,
    kind: SuperlativeKind,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate, RelationError> {
    if samples == 0 {
        return Err(RelationError::NoSamples);
    }
    let (zi, xi) = pair_indices(scene, z, x)?;
    let table = CategoryTable::new(scene);
    let competitors: Vec<(usize, bool)> = (0..scene.len())
        .filter(|&y| y != zi && y != xi)
        .map(|y| (y, distance_indicator(scene, zi, xi, y, kind.comparison())))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let Some(cx) = sample_category(&mut rng, table.row(xi)) else {
            continue;
        };
        let mut wins = true;
        for &(y, beats) in &competitors {
            let cy = sample_category(&mut rng, table.row(y));
            if cy == Some(cx) && !beats {
                wins = false;
            }
        }
        if wins {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok(MonteCarloEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    })
}

fn size_competitors(scene: &Scene, x: &str) -> Result<(usize, Vec<usize>), RelationError> {
    let xi = scene.index_of(x).ok_or_else(|| RelationError::UnknownId(x.to_string()))?;
    Ok((xi, in_id_order(scene, (0..scene.len()).filter(|&y| y != xi))))
}

/// Competitor indices sorted by object id, so products do not depend on
/// proposal order.
fn in_id_order(scene: &Scene, indices: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = indices.collect();
    v.sort_by(|&a, &b| scene.proposals[a].id.cmp(&scene.proposals[b].id));
    v
}

/// Probability that x is the biggest/smallest/... object of its category.
pub fn size_superlative_probability(scene: &Scene, x: &str, kind: SizeKind, k: usize) -> Result<f64, RelationError> {
    let (xi, competitors) = size_competitors(scene, x)?;
    let table = CategoryTable::new(scene).truncated(k);
    Ok(table.product_form(xi, &competitors, |y| {
        kind.beats(&scene.proposals[xi].bbox, &scene.proposals[y].bbox)
    }))
}

/// Power-set counterpart of [`size_superlative_probability`].
pub fn size_superlative_probability_enumerated(
    scene: &Scene,
    x: &str,
    kind: SizeKind,
    k: usize,
) -> Result<f64, RelationError> {
    if scene.len() > MAX_ENUMERATED_OBJECTS + 1 {
        return Err(RelationError::TooLarge(scene.len()));
    }
    let (xi, competitors) = size_competitors(scene, x)?;
    let table = CategoryTable::new(scene).truncated(k);
    Ok(power_set_sum(&table, xi, &competitors, |y| {
        kind.beats(&scene.proposals[xi].bbox, &scene.proposals[y].bbox)
    }))
}
