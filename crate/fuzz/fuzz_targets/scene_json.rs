#![no_main]

use libfuzzer_sys::fuzz_target;
use r2g_core::scene::load_scene;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scene) = load_scene(text) {
        // a loaded scene must survive its own serialization
        let again = load_scene(&scene.to_json()).expect("serialized scene reloads");
        assert_eq!(again.len(), scene.len());
    }
});
