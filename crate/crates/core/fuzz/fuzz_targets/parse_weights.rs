#![no_main]

use libfuzzer_sys::fuzz_target;
use roomopt::io::{parse_weights, weights_to_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(w) = parse_weights(text) {
        assert_eq!(parse_weights(&weights_to_string(&w).unwrap()).unwrap(), w);
    }
});
