#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use r2g_core::parser::InstructionProgram;
use r2g_core::vocab::ConceptVocabulary;

static VOCAB: OnceLock<ConceptVocabulary> = OnceLock::new();

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let vocab = VOCAB.get_or_init(ConceptVocabulary::builtin);
    if let Ok(program) = InstructionProgram::from_json(text, vocab) {
        program.check_shape().expect("loaded program is well-shaped");
    }
});
