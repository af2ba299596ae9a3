//! Replays the fuzz seed corpora through the parsers.

use std::path::Path;

use roomopt::io::{
    parse_gen_config, parse_scene, parse_trajectory, parse_weights, scene_to_string, trajectory_to_string,
    weights_to_string, Strictness,
};

fn seeds(target: &str) -> Vec<String> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty());
    files.iter().map(|p| std::fs::read_to_string(p).unwrap()).collect()
}

#[test]
fn scene_seeds() {
    let mut parsed = 0;
    for text in seeds("parse_scene") {
        if let Ok(doc) = parse_scene(&text, Strictness::Strict) {
            parsed += 1;
            let canon = scene_to_string(&doc).unwrap();
            assert_eq!(scene_to_string(&parse_scene(&canon, Strictness::Strict).unwrap()).unwrap(), canon);
        }
    }
    assert!(parsed >= 3);
}

#[test]
fn weights_seeds() {
    let results: Vec<_> = seeds("parse_weights").iter().map(|t| parse_weights(t)).collect();
    assert!(results.iter().any(Result::is_err));
    for w in results.into_iter().flatten() {
        assert_eq!(parse_weights(&weights_to_string(&w).unwrap()).unwrap(), w);
    }
}

#[test]
fn generator_seeds() {
    for text in seeds("parse_gen_config") {
        parse_gen_config(&text).unwrap().validate().unwrap();
    }
}

#[test]
fn trajectory_seeds() {
    for text in seeds("parse_trajectory") {
        let t = parse_trajectory(&text).unwrap();
        assert_eq!(parse_trajectory(&trajectory_to_string(&t).unwrap()).unwrap(), t);
    }
}
