mod common;

use common::{build, raw_scene};
use proptest::prelude::*;
use r2g_core::embedding::{argmax, softmax_scaled};
use r2g_core::graph::{build_scene_graph, GraphConfig};
use r2g_core::harness::{generate_scene, generate_utterance, GenConfig, GroundTruthView};
use r2g_core::parser::{clues_to_instructions, parse_template, Instruction, InstructionProgram, InstructionRole, ProgramMode};
use r2g_core::reasoning::{
    ground, init_attention, property_round, reference_loss, relation_round, Sigma, WeightBundle,
};
use r2g_core::vocab::ConceptVocabulary;

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, n)
        .prop_filter("mass", |v| v.iter().sum::<f64>() > 1e-6)
        .prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect()
        })
}

fn program(mode: ProgramMode, dim: usize, seed_vectors: &[Vec<f64>]) -> InstructionProgram {
    let roles = InstructionProgram::roles(mode, GraphConfig::default().layout.attribute_count());
    InstructionProgram {
        mode,
        instructions: roles
            .into_iter()
            .enumerate()
            .map(|(i, role)| Instruction {
                vector: seed_vectors[i % seed_vectors.len()][..dim].to_vec(),
                role,
                clue: None,
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_round_keeps_a_distribution(
        raw in raw_scene(1..=8, false),
        vectors in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 59), 1..5),
        attribute in any::<bool>(),
        relu in any::<bool>(),
        beta in 0.1f64..200.0,
    ) {
        let vocab = ConceptVocabulary::builtin();
        let config = GraphConfig::default();
        let graph = build_scene_graph(&build(&raw, 1.0, [0.0; 3]), &vocab, &config).unwrap();
        let mode = if attribute { ProgramMode::Attribute } else { ProgramMode::RelationOnly };
        let p = program(mode, vocab.dim(), &vectors);
        let mut w = WeightBundle::symbolic_default(vocab.dim(), graph.slot_count()).with_beta(beta);
        if relu {
            w.sigma = Sigma::Relu;
        }
        let g = ground(&graph, &p, &w).unwrap();
        prop_assert_eq!(g.trace.rounds.len(), mode.instruction_count(config.layout.attribute_count()));
        for round in &g.trace.rounds {
            prop_assert!((round.attention_out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(round.attention_out.iter().all(|a| *a >= 0.0));
        }
    }

    #[test]
    fn zero_instructions_are_neutral(raw in raw_scene(1..=8, false), a in distribution(8), slot in 0usize..10) {
        let vocab = ConceptVocabulary::builtin();
        let graph = build_scene_graph(&build(&raw, 1.0, [0.0; 3]), &vocab, &GraphConfig::default()).unwrap();
        let n = graph.len();
        let a_prev: Vec<f64> = {
            let head = &a[..n];
            let s: f64 = head.iter().sum();
            if s > 0.0 { head.iter().map(|x| x / s).collect() } else { init_attention(n).unwrap() }
        };
        let w = WeightBundle::symbolic_default(vocab.dim(), graph.slot_count());
        let uniform = init_attention(n).unwrap();
        let prop = Instruction::padding(vocab.dim(), InstructionRole::TargetProperty(slot));
        let (out, b) = property_round(&graph, &a_prev, &prop, &w, slot).unwrap();
        for x in &b {
            prop_assert!((x - 1.0 / n as f64).abs() < 1e-12);
        }
        let (from_uniform, _) = property_round(&graph, &uniform, &prop, &w, slot).unwrap();
        for x in &from_uniform {
            prop_assert!((x - 1.0 / n as f64).abs() < 1e-12);
        }
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let rel = Instruction::padding(vocab.dim(), InstructionRole::Relation);
        let (after, _, transfer) = relation_round(&graph, &a_prev, &rel, &w).unwrap();
        prop_assert!(transfer.is_empty());
        for x in &after {
            prop_assert!((x - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_survives_any_temperature(logits in proptest::collection::vec(-5.0f64..5.0, 1..20), b1 in 1e-3f64..100.0, b2 in 1e-3f64..100.0) {
        let top = argmax(&logits).unwrap();
        prop_assume!(logits.iter().filter(|l| **l == logits[top]).count() == 1);
        let p1 = softmax_scaled(&logits, b1);
        let p2 = softmax_scaled(&logits, b2);
        prop_assert_eq!(argmax(&p1), Some(top));
        prop_assert_eq!(argmax(&p2), Some(top));
    }

    #[test]
    fn uniform_prediction_costs_ln_n(raw in raw_scene(1..=8, false), pick in 0usize..8) {
        let vocab = ConceptVocabulary::builtin();
        let graph = build_scene_graph(&build(&raw, 1.0, [0.0; 3]), &vocab, &GraphConfig::default()).unwrap();
        let n = graph.len();
        let id = graph.nodes[pick % n].object_id.clone();
        let l = reference_loss(&graph, &init_attention(n).unwrap(), &id).unwrap();
        prop_assert!((l - (n as f64).ln()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symbolic_defaults_find_the_unique_consistent_target(seed: u64, attribute in any::<bool>()) {
        let vocab = ConceptVocabulary::builtin();
        let config = GenConfig {
            attribute_mode: attribute,
            ..GenConfig::default()
        };
        let scene = generate_scene(&config, &vocab, "s", seed).unwrap();
        let generated = generate_utterance(&scene, &vocab, &config, seed ^ 1);
        prop_assume!(generated.is_ok());
        let generated = generated.unwrap();
        let view = GroundTruthView::new(&scene, &vocab, &config.graph).unwrap();
        let consistent = view.consistent_targets(&generated.clues).unwrap();
        prop_assert_eq!(consistent.len(), 1);
        prop_assert_eq!(&scene.proposals[consistent[0]].id, &generated.target_id);

        let clues = parse_template(&generated.utterance, &vocab).unwrap();
        let (p, _) = clues_to_instructions(&clues, &vocab, &config.graph.layout, config.mode()).unwrap();
        let graph = build_scene_graph(&scene, &vocab, &config.graph).unwrap();
        let w = WeightBundle::symbolic_default(vocab.dim(), graph.slot_count());
        let g = ground(&graph, &p, &w).unwrap();
        prop_assert_eq!(g.selected, generated.target_id);
    }
}
