#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use r2g_core::harness::GenConfig;
use r2g_core::vocab::ConceptVocabulary;

static VOCAB: OnceLock<ConceptVocabulary> = OnceLock::new();

fuzz_target!(|data: &[u8]| {
    let Ok(config) = serde_json::from_slice::<GenConfig>(data) else {
        return;
    };
    let _ = config.validate(VOCAB.get_or_init(ConceptVocabulary::builtin));
});
