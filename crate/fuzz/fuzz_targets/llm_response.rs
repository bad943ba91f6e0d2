#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use r2g_core::parser::interpret_response;
use r2g_core::vocab::ConceptVocabulary;

static VOCAB: OnceLock<ConceptVocabulary> = OnceLock::new();

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let vocab = VOCAB.get_or_init(ConceptVocabulary::builtin);
    if let Ok((clues, _)) = interpret_response(text, vocab, 0.5) {
        clues.validate(vocab).expect("interpreted clues use vocabulary tokens");
    }
});
