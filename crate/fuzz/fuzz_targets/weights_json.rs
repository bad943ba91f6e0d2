#![no_main]

use libfuzzer_sys::fuzz_target;
use r2g_core::reasoning::WeightBundle;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(w) = WeightBundle::from_json(text) {
        w.validate().expect("loaded weights validate");
    }
});
