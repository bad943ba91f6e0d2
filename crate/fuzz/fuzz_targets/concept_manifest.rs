#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use r2g_core::vocab::{load_vocabulary, ConceptManifest, EmbeddingTable, VocabConfig};

static TABLE: OnceLock<EmbeddingTable> = OnceLock::new();

const ROWS: &str = "couch 1 0 0 0\ntable 0 1 0 0\non 0 0 1 0\nnear 0 0 0 1\nred 0.5 0.5 0 0\n<null> 0.5 0.5 0.5 0.5\n";

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(manifest) = ConceptManifest::from_json(text) else {
        return;
    };
    let table = TABLE.get_or_init(|| EmbeddingTable::parse(ROWS).expect("fixed table parses"));
    if let Ok(vocab) = load_vocabulary(&manifest, table, VocabConfig::default()) {
        assert!(vocab.is_normalized());
    }
});
