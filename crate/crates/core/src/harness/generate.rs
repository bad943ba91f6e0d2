//! Synthetic scenes and template utterances.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Dirichlet};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::graph::{build_scene_graph, GraphConfig, PropertyLayout, SceneGraph, NAMED_COLORS};
use crate::parser::{ParsedClues, ProgramMode, CATEGORY_KEY};
use crate::relations::{build_relation_matrix, RelationKind, RelationMatrix};
use crate::scene::{apply_ground_truth, scene_from_document, ObjectDocument, Scene, SceneDocument};
use crate::vocab::{ConceptVocabulary, Family};

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
const MAX_SCENE_ATTEMPTS: usize = 100;
/// Clearance between ground-standing footprints.
const MARGIN: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_scenes: usize,
    /// Inclusive object count range.
    pub objects_per_scene: [usize; 2],
    /// Number of categories drawn from the vocabulary when `categories` is
    /// not given.
    pub category_pool: usize,
    pub categories: Option<Vec<String>>,
    /// Only emit utterances whose target is the unique object matching them.
    pub ambiguity_guard: bool,
    /// Mention 1-2 target attributes and 0-1 anchor attributes.
    pub attribute_mode: bool,
    /// Replace one-hot category distributions with Dirichlet noise.
    pub noisy: bool,
    pub gt_concentration: f64,
    pub noise_concentration: f64,
    pub stack_probability: f64,
    /// Relations utterances may use; all configured ones when absent.
    pub relations: Option<Vec<RelationKind>>,
    pub graph: GraphConfig,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_scenes: 100,
            objects_per_scene: [4, 12],
            category_pool: 8,
            categories: None,
            ambiguity_guard: true,
            attribute_mode: false,
            noisy: false,
            gt_concentration: 5.0,
            noise_concentration: 0.5,
            stack_probability: 0.25,
            relations: None,
            graph: GraphConfig::default(),
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self, vocab: &ConceptVocabulary) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        let [lo, hi] = self.objects_per_scene;
        if lo < 2 || lo > hi {
            return bad("objects_per_scene must be a range [lo, hi] with 2 <= lo <= hi");
        }
        let pool = self.pool(vocab)?;
        if pool.len() < 2 {
            return bad("need at least two categories");
        }
        if !(self.gt_concentration > 0.0 && self.noise_concentration > 0.0) {
            return bad("Dirichlet concentrations must be positive");
        }
        if !(0.0..=1.0).contains(&self.stack_probability) {
            return bad("stack_probability must lie in [0, 1]");
        }
        self.graph.relations.validate()?;
        if self.utterance_kinds().is_empty() {
            return bad("no relation is both allowed and configured");
        }
        for b in &self.graph.relations.relation_set {
            if vocab.family_of(&b.token) != Some(&Family::Relation) {
                return Err(HarnessError::InvalidConfig(format!(
                    "relation token {:?} is not in the vocabulary",
                    b.token
                )));
            }
        }
        Ok(())
    }

    /// Categories objects are drawn from, in vocabulary order.
    pub fn pool(&self, vocab: &ConceptVocabulary) -> Result<Vec<String>, HarnessError> {
        match &self.categories {
            Some(list) => {
                for c in list {
                    if vocab.family_of(c) != Some(&Family::Category) {
                        return Err(HarnessError::InvalidConfig(format!("{c:?} is not a category")));
                    }
                }
                Ok(list.clone())
            }
            None => {
                let all = vocab.categories();
                if self.category_pool > all.len() {
                    return Err(HarnessError::InvalidConfig(format!(
                        "category_pool {} exceeds the {} vocabulary categories",
                        self.category_pool,
                        all.len()
                    )));
                }
                Ok(all[..self.category_pool].iter().map(|s| s.to_string()).collect())
            }
        }
    }

    pub fn mode(&self) -> ProgramMode {
        if self.attribute_mode {
            ProgramMode::Attribute
        } else {
            ProgramMode::RelationOnly
        }
    }

    fn utterance_kinds(&self) -> Vec<RelationKind> {
        self.graph
            .relations
            .kinds()
            .filter(|k| self.relations.as_ref().is_none_or(|allowed| allowed.contains(k)))
            .collect()
    }
}

/// Typical length, width, height in meters.
fn base_extents(category: &str) -> [f64; 3] {
    match category {
        "chair" => [0.5, 0.5, 0.9],
        "table" => [1.4, 0.8, 0.75],
        "couch" => [2.0, 0.9, 0.8],
        "bag" => [0.4, 0.3, 0.35],
        "lamp" => [0.35, 0.35, 1.5],
        "bed" => [2.0, 1.6, 0.6],
        "desk" => [1.4, 0.7, 0.75],
        "cabinet" => [0.9, 0.5, 1.2],
        "shelf" => [1.0, 0.35, 1.8],
        "monitor" => [0.6, 0.2, 0.45],
        "pillow" => [0.5, 0.4, 0.15],
        "box" => [0.5, 0.4, 0.4],
        "door" => [0.9, 0.1, 2.0],
        "plant" => [0.5, 0.5, 1.0],
        "sink" => [0.6, 0.5, 0.9],
        "toilet" => [0.7, 0.45, 0.8],
        "backpack" => [0.35, 0.25, 0.45],
        "trash can" => [0.35, 0.35, 0.6],
        "coffee table" => [1.1, 0.6, 0.45],
        "office chair" => [0.6, 0.6, 1.0],
        _ => [0.6, 0.6, 0.8],
    }
}

/// World-axis footprint rectangle (x0, x1, y0, y1) of a box turned by a
/// multiple of 90 degrees.
fn footprint(center: [f64; 3], extents: [f64; 3], quarter_turns: u8) -> [f64; 4] {
    let (hx, hy) = if quarter_turns.is_multiple_of(2) {
        (extents[0] / 2.0, extents[1] / 2.0)
    } else {
        (extents[1] / 2.0, extents[0] / 2.0)
    };
    [center[0] - hx, center[0] + hx, center[1] - hy, center[1] + hy]
}

fn yaw_of(quarter_turns: u8) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    [0.0, FRAC_PI_2, PI, -FRAC_PI_2][usize::from(quarter_turns % 4)]
}

fn overlaps(a: &[f64; 4], b: &[f64; 4], margin: f64) -> bool {
    a[0] < b[1] + margin && b[0] < a[1] + margin && a[2] < b[3] + margin && b[2] < a[3] + margin
}

struct Placed {
    category: String,
    center: [f64; 3],
    extents: [f64; 3],
    turns: u8,
    has_child: bool,
    grounded: bool,
}

fn place_objects(
    rng: &mut ChaCha8Rng,
    pool: &[String],
    n: usize,
    stack_probability: f64,
) -> Option<Vec<Placed>> {
    let room = 4.0 + 0.6 * n as f64;
    let mut placed: Vec<Placed> = Vec::with_capacity(n);
    for _ in 0..n {
        let category = pool[rng.gen_range(0..pool.len())].clone();
        let parents: Vec<usize> = (0..placed.len())
            .filter(|&i| placed[i].grounded && !placed[i].has_child)
            .collect();
        if !parents.is_empty() && rng.gen_bool(stack_probability) {
            let p = parents[rng.gen_range(0..parents.len())];
            let parent = &placed[p];
            let base = base_extents(&category);
            let extents = [
                parent.extents[0] * rng.gen_range(0.6..0.9),
                parent.extents[1] * rng.gen_range(0.6..0.9),
                base[2] * rng.gen_range(0.8..1.2),
            ];
            // stays inside the parent's footprint
            let slack_x = (parent.extents[0] - extents[0]) / 2.0;
            let slack_y = (parent.extents[1] - extents[1]) / 2.0;
            let (dx, dy) = (rng.gen_range(-slack_x..=slack_x), rng.gen_range(-slack_y..=slack_y));
            let (dx, dy) = if parent.turns.is_multiple_of(2) { (dx, dy) } else { (dy, dx) };
            let top = parent.center[2] + parent.extents[2] / 2.0;
            let child = Placed {
                category,
                center: [parent.center[0] + dx, parent.center[1] + dy, top + extents[2] / 2.0],
                extents,
                turns: parent.turns,
                has_child: false,
                grounded: false,
            };
            placed[p].has_child = true;
            placed.push(child);
            continue;
        }
        let base = base_extents(&category);
        let extents = base.map(|e| e * rng.gen_range(0.8..1.2));
        let mut ok = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let turns: u8 = rng.gen_range(0..4);
            let center = [rng.gen_range(0.0..room), rng.gen_range(0.0..room), extents[2] / 2.0];
            let fp = footprint(center, extents, turns);
            if fp[0] < 0.0 || fp[1] > room || fp[2] < 0.0 || fp[3] > room {
                continue;
            }
            let clear = placed
                .iter()
                .filter(|o| o.grounded)
                .all(|o| !overlaps(&fp, &footprint(o.center, o.extents, o.turns), MARGIN));
            if clear {
                placed.push(Placed {
                    category: category.clone(),
                    center,
                    extents,
                    turns,
                    has_child: false,
                    grounded: true,
                });
                ok = true;
                break;
            }
        }
        if !ok {
            return None;
        }
    }
    Some(placed)
}

/// Scene with `n` objects in `[lo, hi]`, categories from the pool, colors
/// from the named-color table, a random shape and material, and stored
/// ground-truth categories. Deterministic in `seed`.
pub fn generate_scene(
    config: &GenConfig,
    vocab: &ConceptVocabulary,
    id: &str,
    seed: u64,
) -> Result<Scene, HarnessError> {
    let pool = config.pool(vocab)?;
    let colors: Vec<(&str, [f64; 3])> = NAMED_COLORS
        .iter()
        .copied()
        .filter(|(name, _)| vocab.get(name).is_some())
        .collect();
    let shapes = vocab_tokens(vocab, "shape");
    let materials = vocab_tokens(vocab, "material");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..MAX_SCENE_ATTEMPTS {
        let [lo, hi] = config.objects_per_scene;
        let n = rng.gen_range(lo..=hi);
        let Some(placed) = place_objects(&mut rng, &pool, n, config.stack_probability) else {
            return Err(HarnessError::PlacementFailed(id.to_string()));
        };
        let width = (n - 1).to_string().len();
        let mut objects = Vec::with_capacity(n);
        for (i, o) in placed.iter().enumerate() {
            let category_dist = if config.noisy {
                let alphas: Vec<f64> = pool
                    .iter()
                    .map(|c| {
                        if *c == o.category {
                            config.gt_concentration
                        } else {
                            config.noise_concentration
                        }
                    })
                    .collect();
                let sample = Dirichlet::new(&alphas)
                    .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?
                    .sample(&mut rng);
                let total: f64 = sample.iter().sum();
                pool.iter().cloned().zip(sample.into_iter().map(|p| p / total)).collect()
            } else {
                BTreeMap::from([(o.category.clone(), 1.0)])
            };
            let mean_rgb = if colors.is_empty() {
                [0.5; 3]
            } else {
                colors[rng.gen_range(0..colors.len())].1
            };
            let shape_dist = shapes
                .choose(&mut rng)
                .map(|s| BTreeMap::from([(s.clone(), 1.0)]));
            let attrs = materials
                .choose(&mut rng)
                .map(|m| BTreeMap::from([("material".to_string(), m.clone())]));
            objects.push(ObjectDocument {
                id: format!("o{i:0width$}"),
                center: o.center,
                extents: o.extents,
                yaw: yaw_of(o.turns),
                mean_rgb,
                category_dist,
                shape_dist,
                attrs,
                gt_category: Some(o.category.clone()),
            });
        }
        let scene = scene_from_document(SceneDocument {
            id: id.to_string(),
            objects,
        })?;
        let gt = apply_ground_truth(&scene, 1.0, 0)?;
        let matrix = build_relation_matrix(&gt, &config.graph.relations)?;
        let has_pair = (0..n).any(|z| (0..n).any(|x| z != x && matrix.pair(z, x).iter().any(|&r| r >= 0.5)));
        if has_pair {
            return Ok(scene);
        }
    }
    Err(HarnessError::PlacementFailed(id.to_string()))
}

fn vocab_tokens(vocab: &ConceptVocabulary, family: &str) -> Vec<String> {
    vocab
        .tokens_in(&Family::attribute(family))
        .into_iter()
        .map(str::to_string)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedRef {
    pub utterance: String,
    pub target_id: String,
    pub clues: ParsedClues,
    pub relation: RelationKind,
}

/// What the generator and the uniqueness check need to know about a scene
/// with one-hot ground-truth categories.
pub struct GroundTruthView {
    pub scene: Scene,
    pub categories: Vec<String>,
    pub matrix: RelationMatrix,
    pub graph: SceneGraph,
    pub layout: PropertyLayout,
}

impl GroundTruthView {
    pub fn new(scene: &Scene, vocab: &ConceptVocabulary, config: &GraphConfig) -> Result<Self, HarnessError> {
        let gt = apply_ground_truth(scene, 1.0, 0)?;
        let categories = gt.proposals.iter().map(|p| gt.ground_truth[&p.id].clone()).collect();
        let matrix = build_relation_matrix(&gt, &config.relations)?;
        let graph = build_scene_graph(&gt, vocab, config)?;
        Ok(GroundTruthView {
            scene: gt,
            categories,
            matrix,
            graph,
            layout: config.layout.clone(),
        })
    }

    /// Whether object `i` has every property in `props` (category by ground
    /// truth, attributes by a graph weight of at least 0.5).
    pub fn matches(&self, i: usize, props: &BTreeMap<String, String>) -> bool {
        props.iter().all(|(key, token)| {
            if key == CATEGORY_KEY {
                return &self.categories[i] == token;
            }
            self.layout
                .slot_of(&Family::attribute(key.as_str()))
                .and_then(|j| self.graph.nodes[i].property_meta[j].get(token))
                .is_some_and(|&w| w >= 0.5)
        })
    }

    /// Attribute (key, token) pairs that hold for object `i` with certainty.
    pub fn certain_attributes(&self, i: usize) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (j, slot) in self.layout.attributes.iter().enumerate() {
            let meta = &self.graph.nodes[i].property_meta[j + 1];
            for (token, &w) in meta {
                if w >= 0.999 {
                    out.push((slot.family.clone(), token.clone()));
                }
            }
        }
        out
    }

    /// Every object consistent with `clues`: it matches the target
    /// description and, if a relation is given, stands in that relation to
    /// some object matching the anchor description.
    pub fn consistent_targets(&self, clues: &ParsedClues) -> Result<Vec<usize>, HarnessError> {
        let n = self.scene.len();
        let kind = match &clues.relation {
            Some(token) => Some(self.relation_kind(token)?),
            None => None,
        };
        Ok((0..n)
            .filter(|&x| self.matches(x, &clues.target))
            .filter(|&x| match kind {
                None => true,
                Some(k) => (0..n).any(|z| {
                    z != x && self.matches(z, &clues.anchor) && self.matrix.get(z, x, k).is_some_and(|r| r >= 0.5)
                }),
            })
            .collect())
    }

    fn relation_kind(&self, token: &str) -> Result<RelationKind, HarnessError> {
        self.graph
            .relation_tokens
            .iter()
            .position(|t| t == token)
            .map(|j| self.matrix.kinds()[j])
            .ok_or_else(|| HarnessError::InvalidConfig(format!("relation {token:?} is not configured")))
    }
}

/// Picks an (anchor, relation, target) triple and renders
/// "the <attrs> <target> <relation> the <attrs> <anchor>".
///
/// With the ambiguity guard, the anchor's category is unique in the scene
/// and exactly one object of the target's category stands in the relation to
/// it.
pub fn generate_utterance(
    scene: &Scene,
    vocab: &ConceptVocabulary,
    config: &GenConfig,
    seed: u64,
) -> Result<GeneratedRef, HarnessError> {
    let view = GroundTruthView::new(scene, vocab, &config.graph)?;
    generate_from_view(&view, config, seed)
}

pub fn generate_from_view(view: &GroundTruthView, config: &GenConfig, seed: u64) -> Result<GeneratedRef, HarnessError> {
    let n = view.scene.len();
    let cats = &view.categories;
    let count = |c: &str| cats.iter().filter(|k| *k == c).count();
    let kinds = config.utterance_kinds();
    let mut candidates = Vec::new();
    for z in 0..n {
        if config.ambiguity_guard && count(&cats[z]) != 1 {
            continue;
        }
        for &kind in &kinds {
            for x in 0..n {
                if x == z || cats[x] == cats[z] || view.matrix.get(z, x, kind).unwrap_or(0.0) < 0.5 {
                    continue;
                }
                if config.ambiguity_guard {
                    let rivals = (0..n)
                        .filter(|&y| y != z && cats[y] == cats[x])
                        .filter(|&y| view.matrix.get(z, y, kind).unwrap_or(0.0) >= 0.5)
                        .count();
                    if rivals != 1 {
                        continue;
                    }
                }
                candidates.push((z, kind, x));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let &(z, kind, x) = candidates
        .choose(&mut rng)
        .ok_or_else(|| HarnessError::NoUnambiguousTriple(view.scene.id.clone()))?;
    let token = config
        .graph
        .relations
        .relation_set
        .iter()
        .find(|b| b.kind == kind)
        .map(|b| b.token.clone())
        .expect("kind comes from the relation set");

    let mut target = BTreeMap::from([(CATEGORY_KEY.to_string(), cats[x].clone())]);
    let mut anchor = BTreeMap::from([(CATEGORY_KEY.to_string(), cats[z].clone())]);
    if config.attribute_mode {
        let k = rng.gen_range(1..=2);
        pick_attributes(&mut rng, &view.certain_attributes(x), k, &mut target);
        let k = rng.gen_range(0..=1);
        pick_attributes(&mut rng, &view.certain_attributes(z), k, &mut anchor);
    }
    let clues = ParsedClues {
        target,
        relation: Some(token),
        anchor,
    };
    Ok(GeneratedRef {
        utterance: render(&clues, &view.layout),
        target_id: view.scene.proposals[x].id.clone(),
        clues,
        relation: kind,
    })
}

fn pick_attributes(
    rng: &mut ChaCha8Rng,
    available: &[(String, String)],
    count: usize,
    into: &mut BTreeMap<String, String>,
) {
    let mut by_family: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (f, t) in available {
        by_family.entry(f).or_default().push(t);
    }
    let families: Vec<&str> = by_family.keys().copied().collect();
    for f in families.choose_multiple(rng, count.min(families.len())) {
        let tokens = &by_family[f];
        let t = tokens[rng.gen_range(0..tokens.len())];
        into.insert(f.to_string(), t.to_string());
    }
}

/// Attribute words in layout order, then the category.
fn describe(props: &BTreeMap<String, String>, layout: &PropertyLayout) -> String {
    let mut words: Vec<&str> = layout
        .attributes
        .iter()
        .filter_map(|slot| props.get(&slot.family).map(String::as_str))
        .collect();
    words.extend(props.get(CATEGORY_KEY).map(String::as_str));
    words.join(" ")
}

pub fn render(clues: &ParsedClues, layout: &PropertyLayout) -> String {
    let target = describe(&clues.target, layout);
    match &clues.relation {
        Some(r) if !clues.anchor.is_empty() => {
            format!("the {target} {r} the {}", describe(&clues.anchor, layout))
        }
        Some(r) => format!("the {target} {r}"),
        None => format!("the {target}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_template;
    use crate::scene::load_scene;

    #[test]
    fn two_object_scene() {
        let v = ConceptVocabulary::builtin();
        let cfg = GenConfig {
            objects_per_scene: [2, 2],
            ..GenConfig::default()
        };
        let s = generate_scene(&cfg, &v, "s", 1).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.ground_truth.len(), 2);
        let fp = |p: &crate::scene::ObjectProposal| {
            let turns = ((p.bbox.yaw / std::f64::consts::FRAC_PI_2).round() as i32).rem_euclid(4) as u8;
            footprint(p.bbox.center, p.bbox.extents, turns)
        };
        let [a, b] = [&s.proposals[0], &s.proposals[1]];
        if a.bbox.bottom().abs() < 1e-12 && b.bbox.bottom().abs() < 1e-12 {
            assert!(!overlaps(&fp(a), &fp(b), 0.0));
        } else {
            // stacked: the upper one rests on the lower one's top
            let (lo, hi) = if a.bbox.bottom() < b.bbox.bottom() { (a, b) } else { (b, a) };
            assert!((hi.bbox.bottom() - lo.bbox.top()).abs() < 1e-9);
        }
        assert_eq!(generate_scene(&cfg, &v, "s", 1).unwrap(), s);
        assert_ne!(generate_scene(&cfg, &v, "s", 2).unwrap(), s);
    }

    #[test]
    fn scenes_survive_the_validator() {
        let v = ConceptVocabulary::builtin();
        let cfg = GenConfig {
            noisy: true,
            ..GenConfig::default()
        };
        for seed in 0..20 {
            let s = generate_scene(&cfg, &v, "s", seed).unwrap();
            let back = load_scene(&s.to_json()).unwrap();
            assert_eq!(back.len(), s.len());
            assert!((4..=12).contains(&s.len()));
        }
    }

    #[test]
    fn bag_on_couch_is_forced() {
        let v = ConceptVocabulary::builtin();
        let scene = load_scene(
            r#"{"id": "s", "objects": [
              {"id": "bag", "center": [0, 0, 0.6], "extents": [1.6, 0.7, 0.3], "mean_rgb": [0, 0, 0],
               "category_dist": {"bag": 1.0}, "gt_category": "bag"},
              {"id": "couch", "center": [0, 0, 0.225], "extents": [2.0, 0.9, 0.45], "mean_rgb": [0, 0, 0],
               "category_dist": {"couch": 1.0}, "gt_category": "couch"}]}"#,
        )
        .unwrap();
        let cfg = GenConfig {
            relations: Some(vec![RelationKind::Supporting]),
            ..GenConfig::default()
        };
        let r = generate_utterance(&scene, &v, &cfg, 0).unwrap();
        assert_eq!(r.utterance, "the bag on the couch");
        assert_eq!(r.target_id, "bag");
        assert_eq!(parse_template(&r.utterance, &v).unwrap(), r.clues);
    }

    #[test]
    fn guard_rejects_two_bags_on_the_couch() {
        let v = ConceptVocabulary::builtin();
        let scene = load_scene(
            r#"{"id": "s", "objects": [
              {"id": "b1", "center": [-0.5, 0, 0.6], "extents": [0.9, 0.8, 0.3], "mean_rgb": [0, 0, 0],
               "category_dist": {"bag": 1.0}, "gt_category": "bag"},
              {"id": "b2", "center": [0.5, 0, 0.6], "extents": [0.9, 0.8, 0.3], "mean_rgb": [0, 0, 0],
               "category_dist": {"bag": 1.0}, "gt_category": "bag"},
              {"id": "couch", "center": [0, 0, 0.225], "extents": [2.0, 0.9, 0.45], "mean_rgb": [0, 0, 0],
               "category_dist": {"couch": 1.0}, "gt_category": "couch"}]}"#,
        )
        .unwrap();
        let cfg = GenConfig {
            relations: Some(vec![RelationKind::Supporting]),
            ..GenConfig::default()
        };
        assert!(matches!(
            generate_utterance(&scene, &v, &cfg, 0),
            Err(HarnessError::NoUnambiguousTriple(_))
        ));
        let open = GenConfig {
            ambiguity_guard: false,
            ..cfg
        };
        let r = generate_utterance(&scene, &v, &open, 0).unwrap();
        assert_eq!(r.utterance, "the bag on the couch");
    }

    #[test]
    fn attribute_mode_round_trips_and_stays_unique() {
        let v = ConceptVocabulary::builtin();
        let cfg = GenConfig {
            attribute_mode: true,
            ..GenConfig::default()
        };
        let mut with_attrs = 0;
        for seed in 0..30 {
            let scene = generate_scene(&cfg, &v, "s", seed).unwrap();
            let view = GroundTruthView::new(&scene, &v, &cfg.graph).unwrap();
            let Ok(r) = generate_from_view(&view, &cfg, seed) else { continue };
            assert_eq!(parse_template(&r.utterance, &v).unwrap(), r.clues, "{}", r.utterance);
            let hits = view.consistent_targets(&r.clues).unwrap();
            assert_eq!(hits, vec![scene.index_of(&r.target_id).unwrap()], "{}", r.utterance);
            with_attrs += usize::from(r.clues.target.len() > 1);
        }
        assert!(with_attrs > 10);
    }
}
