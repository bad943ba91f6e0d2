#![no_main]

use libfuzzer_sys::fuzz_target;
use r2g_core::harness::Dataset;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Dataset::parse_refs(text);
    }
});
