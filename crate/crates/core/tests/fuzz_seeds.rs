//! Replays the checked-in fuzz corpus through the fuzzed entry points.

use std::fs;
use std::path::PathBuf;

use r2g_core::harness::{Dataset, GenConfig};
use r2g_core::parser::{interpret_response, parse_template, InstructionProgram};
use r2g_core::reasoning::WeightBundle;
use r2g_core::scene::load_scene;
use r2g_core::vocab::{load_vocabulary, ConceptManifest, ConceptVocabulary, EmbeddingTable, VocabConfig};

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn ok_names(results: Vec<(String, bool)>) -> Vec<String> {
    results.into_iter().filter(|(_, ok)| *ok).map(|(n, _)| n).collect()
}

#[test]
fn scene_seeds() {
    let r = seeds("scene_json")
        .into_iter()
        .map(|(n, t)| {
            let s = load_scene(&t);
            if let Ok(s) = &s {
                assert_eq!(&load_scene(&s.to_json()).unwrap(), s);
            }
            (n, s.is_ok())
        })
        .collect();
    assert_eq!(ok_names(r), ["bag_on_couch.json", "generated_noisy.json"]);
}

#[test]
fn manifest_and_table_seeds() {
    let table = EmbeddingTable::parse(&seeds("embedding_table").into_iter().find(|(n, _)| n == "small.txt").unwrap().1)
        .unwrap();
    let r = seeds("concept_manifest")
        .into_iter()
        .map(|(n, t)| {
            let ok = ConceptManifest::from_json(&t)
                .ok()
                .map(|m| load_vocabulary(&m, &table, VocabConfig::default()).is_ok());
            (n, ok == Some(true))
        })
        .collect();
    assert_eq!(ok_names(r), ["small.json"]);
    let r = seeds("embedding_table")
        .into_iter()
        .map(|(n, t)| (n, EmbeddingTable::parse(&t).is_ok() && EmbeddingTable::from_reader(t.as_bytes()).is_ok()))
        .collect();
    assert_eq!(ok_names(r), ["small.txt"]);
}

#[test]
fn utterance_and_response_seeds() {
    let vocab = ConceptVocabulary::builtin();
    let parsed = seeds("template_utterance")
        .into_iter()
        .filter(|(_, t)| parse_template(t, &vocab).is_ok())
        .count();
    assert!(parsed >= 5);
    let r = seeds("llm_response")
        .into_iter()
        .map(|(n, t)| {
            let out = interpret_response(&t, &vocab, 0.5);
            if let Ok((c, _)) = &out {
                c.validate(&vocab).unwrap();
            }
            (n, out.is_ok())
        })
        .collect();
    assert_eq!(ok_names(r), ["r0.json", "r1.json"]);
}

#[test]
fn weights_program_refs_config_seeds() {
    let vocab = ConceptVocabulary::builtin();
    let r = seeds("weights_json")
        .into_iter()
        .map(|(n, t)| (n, WeightBundle::from_json(&t).is_ok()))
        .collect();
    assert_eq!(ok_names(r), ["small.json"]);
    for (n, t) in seeds("program_json") {
        let p = InstructionProgram::from_json(&t, &vocab).unwrap_or_else(|e| panic!("{n}: {e}"));
        p.check_shape().unwrap();
    }
    let r = seeds("refs_jsonl")
        .into_iter()
        .map(|(n, t)| (n, Dataset::parse_refs(&t).is_ok()))
        .collect();
    assert_eq!(ok_names(r), ["generated.jsonl"]);
    let r = seeds("gen_config")
        .into_iter()
        .map(|(n, t)| {
            let c: Result<GenConfig, _> = serde_json::from_str(&t);
            (n, c.map(|c| c.validate(&vocab).is_ok()).unwrap_or(false))
        })
        .collect();
    assert_eq!(ok_names(r), ["noisy_attribute.json", "small.json"]);
}
