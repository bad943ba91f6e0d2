//! Grounding accuracy over a dataset, and the top-K / ground-truth sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, RefRecord};
use super::{mix_seed, seed_for, HarnessError};
use crate::graph::{build_scene_graph, GraphConfig, SceneGraph};
use crate::parser::{clues_to_instructions, ProgramMode, TemplateParser};
use crate::reasoning::{combined_loss, ground, reference_loss, LossConfig, WeightBundle};
use crate::scene::{apply_ground_truth, Scene, SceneError};
use crate::vocab::ConceptVocabulary;

#[derive(Clone, Debug, Default)]
pub struct EngineConfig {
    pub graph: GraphConfig,
    /// Symbolic defaults when absent.
    pub weights: Option<WeightBundle>,
    pub parser: TemplateParser,
    /// Program mode for records that do not name one.
    pub default_mode: ProgramMode,
    pub loss: LossConfig,
}

impl EngineConfig {
    pub fn weights_for(&self, vocab: &ConceptVocabulary) -> WeightBundle {
        self.weights
            .clone()
            .unwrap_or_else(|| WeightBundle::symbolic_default(vocab.dim(), self.graph.layout.attribute_count() + 1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub index: usize,
    pub scene_id: String,
    pub utterance: String,
    pub target_id: String,
    pub predicted: Option<String>,
    pub correct: bool,
    pub parse_error: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub relation: String,
    /// `None` when the gold object received no attention (infinite loss) or
    /// grounding failed.
    pub reference_loss: Option<f64>,
    pub infinite_loss: bool,
    pub combined_loss: Option<f64>,
    pub rounds: usize,
    pub expected_rounds: usize,
    /// Largest |Σ a − 1| over every round.
    pub max_attention_deviation: f64,
    pub min_attention: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationStats {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_examples: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub per_relation: BTreeMap<String, RelationStats>,
    /// Mean over examples with a finite reference loss.
    pub mean_reference_loss: Option<f64>,
    pub infinite_losses: usize,
    pub mean_combined_loss: Option<f64>,
    pub parse_errors: usize,
    pub errors: usize,
    pub max_attention_deviation: f64,
    pub min_attention: f64,
    pub round_count_mismatches: usize,
    pub records: Vec<ExampleRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn aggregate(records: Vec<ExampleRecord>) -> Self {
        let n = records.len();
        let n_correct = records.iter().filter(|r| r.correct).count();
        let mut per_relation: BTreeMap<String, RelationStats> = BTreeMap::new();
        for r in &records {
            let s = per_relation.entry(r.relation.clone()).or_insert(RelationStats {
                n: 0,
                correct: 0,
                accuracy: 0.0,
            });
            s.n += 1;
            s.correct += usize::from(r.correct);
        }
        for s in per_relation.values_mut() {
            s.accuracy = s.correct as f64 / s.n as f64;
        }
        let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        EvalReport {
            n_examples: n,
            n_correct,
            accuracy: if n == 0 { 0.0 } else { n_correct as f64 / n as f64 },
            per_relation,
            mean_reference_loss: mean(records.iter().filter_map(|r| r.reference_loss).collect()),
            infinite_losses: records.iter().filter(|r| r.infinite_loss).count(),
            mean_combined_loss: mean(records.iter().filter_map(|r| r.combined_loss).collect()),
            parse_errors: records.iter().filter(|r| r.parse_error).count(),
            errors: records.iter().filter(|r| r.error.is_some()).count(),
            max_attention_deviation: records.iter().map(|r| r.max_attention_deviation).fold(0.0, f64::max),
            min_attention: records.iter().map(|r| r.min_attention).fold(f64::INFINITY, f64::min),
            round_count_mismatches: records.iter().filter(|r| r.rounds != r.expected_rounds).count(),
            records,
        }
    }
}

/// Evaluates every record of `dataset` on its scene as stored.
pub fn evaluate(
    dataset: &Dataset,
    vocab: &ConceptVocabulary,
    engine: &EngineConfig,
) -> Result<EvalReport, HarnessError> {
    evaluate_with(dataset, vocab, engine, |s| Ok(s.clone()))
}

/// Evaluates with every scene passed through `transform` first.
pub fn evaluate_with<F>(
    dataset: &Dataset,
    vocab: &ConceptVocabulary,
    engine: &EngineConfig,
    transform: F,
) -> Result<EvalReport, HarnessError>
where
    F: Fn(&Scene) -> Result<Scene, SceneError> + Sync,
{
    if dataset.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let weights = engine.weights_for(vocab);
    weights.validate()?;
    let graphs: BTreeMap<&str, Result<SceneGraph, String>> = dataset
        .scenes
        .par_iter()
        .map(|(id, scene)| {
            let g = transform(scene)
                .map_err(|e| e.to_string())
                .and_then(|s| build_scene_graph(&s, vocab, &engine.graph).map_err(|e| e.to_string()));
            (id.as_str(), g)
        })
        .collect();
    let records: Vec<ExampleRecord> = dataset
        .refs
        .par_iter()
        .enumerate()
        .map(|(i, r)| run_example(i, r, graphs.get(r.scene_id.as_str()), vocab, engine, &weights))
        .collect();
    Ok(EvalReport::aggregate(records))
}

fn run_example(
    index: usize,
    record: &RefRecord,
    graph: Option<&Result<SceneGraph, String>>,
    vocab: &ConceptVocabulary,
    engine: &EngineConfig,
    weights: &WeightBundle,
) -> ExampleRecord {
    let mode = record.mode.unwrap_or(engine.default_mode);
    let mut out = ExampleRecord {
        index,
        scene_id: record.scene_id.clone(),
        utterance: record.utterance.clone(),
        target_id: record.target_id.clone(),
        predicted: None,
        correct: false,
        parse_error: false,
        error: None,
        relation: record
            .clues
            .as_ref()
            .and_then(|c| c.relation.clone())
            .unwrap_or_else(|| "none".to_string()),
        reference_loss: None,
        infinite_loss: false,
        combined_loss: None,
        rounds: 0,
        expected_rounds: mode.instruction_count(engine.graph.layout.attribute_count()),
        max_attention_deviation: 0.0,
        min_attention: 0.0,
    };
    let graph = match graph {
        Some(Ok(g)) => g,
        Some(Err(e)) => {
            out.error = Some(e.clone());
            return out;
        }
        None => {
            out.error = Some(format!("unknown scene {:?}", record.scene_id));
            return out;
        }
    };
    let program = engine
        .parser
        .parse(&record.utterance, vocab)
        .and_then(|clues| clues_to_instructions(&clues, vocab, &engine.graph.layout, mode));
    let program = match program {
        Ok((p, _)) => p,
        Err(e) => {
            out.parse_error = true;
            out.error = Some(e.to_string());
            return out;
        }
    };
    let grounding = match ground(graph, &program, weights) {
        Ok(g) => g,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.rounds = grounding.trace.rounds.len();
    out.min_attention = f64::INFINITY;
    for round in &grounding.trace.rounds {
        let dev = (round.attention_out.iter().sum::<f64>() - 1.0).abs();
        out.max_attention_deviation = out.max_attention_deviation.max(dev);
        out.min_attention = round.attention_out.iter().copied().fold(out.min_attention, f64::min);
    }
    out.correct = grounding.selected == record.target_id;
    out.predicted = Some(grounding.selected);
    match reference_loss(graph, &grounding.attention, &record.target_id) {
        Ok(l) if l.is_finite() => out.reference_loss = Some(l),
        Ok(_) => out.infinite_loss = true,
        Err(e) => out.error = Some(e.to_string()),
    }
    if let Some(gold) = &record.clues {
        if let Ok(l) = combined_loss(
            graph,
            &grounding.attention,
            &record.target_id,
            &program,
            gold,
            vocab,
            &engine.graph.layout,
            &engine.loss,
        ) {
            out.combined_loss = l.total.is_finite().then_some(l.total);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub proportion: f64,
    pub accuracy: f64,
    pub n_examples: usize,
    pub n_correct: usize,
}

/// `points` evenly spaced proportions from 0 to 1.
pub fn proportions(points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![1.0],
        _ => (0..points).map(|i| i as f64 / (points - 1) as f64).collect(),
    }
}

/// Accuracy as a function of the share of proposals given their ground-truth
/// category; the rest get a wrong one.
pub fn sweep_gt_proportion(
    dataset: &Dataset,
    vocab: &ConceptVocabulary,
    engine: &EngineConfig,
    proportions: &[f64],
    seed: u64,
) -> Result<Vec<CurvePoint>, HarnessError> {
    proportions
        .iter()
        .map(|&p| {
            let report = evaluate_with(dataset, vocab, engine, |s| {
                apply_ground_truth(s, p, mix_seed(seed, seed_for(&s.id)))
            })?;
            Ok(CurvePoint {
                proportion: p,
                accuracy: report.accuracy,
                n_examples: report.n_examples,
                n_correct: report.n_correct,
            })
        })
        .collect()
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("proportion,accuracy,n_examples,n_correct\n");
    for p in points {
        out += &format!("{},{},{},{}\n", p.proportion, p.accuracy, p.n_examples, p.n_correct);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub k: usize,
    pub accuracy: f64,
    pub n_examples: usize,
    pub n_correct: usize,
    #[serde(skip)]
    pub report: Option<EvalReport>,
}

/// Rebuilds the graphs with superlative top-K truncation at every `k`.
pub fn sweep_top_k(
    dataset: &Dataset,
    vocab: &ConceptVocabulary,
    engine: &EngineConfig,
    ks: &[usize],
) -> Result<Vec<TopKRow>, HarnessError> {
    ks.iter()
        .map(|&k| {
            let mut e = engine.clone();
            e.graph.relations.top_k = k;
            let report = evaluate(dataset, vocab, &e)?;
            Ok(TopKRow {
                k,
                accuracy: report.accuracy,
                n_examples: report.n_examples,
                n_correct: report.n_correct,
                report: Some(report),
            })
        })
        .collect()
}

pub fn top_k_csv(rows: &[TopKRow]) -> String {
    let mut out = String::from("k,accuracy,n_examples,n_correct\n");
    for r in rows {
        out += &format!("{},{},{},{}\n", r.k, r.accuracy, r.n_examples, r.n_correct);
    }
    out
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // tied values share the mean of their positions
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
