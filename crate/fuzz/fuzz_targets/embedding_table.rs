#![no_main]

use libfuzzer_sys::fuzz_target;
use r2g_core::vocab::EmbeddingTable;

fuzz_target!(|data: &[u8]| {
    // the reader path also sees invalid UTF-8
    let _ = EmbeddingTable::from_reader(data);
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = EmbeddingTable::parse(text);
    }
});
