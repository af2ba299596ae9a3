#![no_main]

use libfuzzer_sys::fuzz_target;
use roomopt::io::{parse_trajectory, trajectory_to_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = parse_trajectory(text) {
        let canon = trajectory_to_string(&t).unwrap();
        assert_eq!(parse_trajectory(&canon).unwrap(), t);
    }
});
