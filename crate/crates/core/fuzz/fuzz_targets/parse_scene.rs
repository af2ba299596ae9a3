#![no_main]

use libfuzzer_sys::fuzz_target;
use roomopt::io::{parse_scene, scene_to_string, Strictness};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for mode in [Strictness::Strict, Strictness::Lenient] {
        if let Ok(doc) = parse_scene(text, mode) {
            // canonical output must parse back to the same text
            let canon = scene_to_string(&doc).expect("serializable");
            let again = parse_scene(&canon, mode).expect("canonical text parses");
            assert_eq!(scene_to_string(&again).unwrap(), canon);
        }
    }
});
