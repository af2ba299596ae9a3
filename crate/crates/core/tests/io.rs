use proptest::prelude::*;
use serde_json::{json, Value};

use roomopt::energy::{EnergyModel, TermWeights};
use roomopt::error::Error;
use roomopt::io::{
    load_scene, load_weights, parse_gen_config, parse_scene, parse_trajectory, parse_weights, render_top_down,
    save_scene, scene_to_string, trajectory_to_string, weights_to_string, GroundTruthObject, SceneDocument, Strictness,
};
use roomopt::optimizer::{optimize, OptimConfig};
use roomopt::synth::{generate_scene, perturb_scene, GenConfig, NoiseSpec};

fn document(seed: u64) -> SceneDocument {
    let g = generate_scene(&GenConfig::with_seed(seed)).unwrap();
    let p = perturb_scene(&g.scene, &NoiseSpec::default(), seed, false).unwrap();
    SceneDocument::new(p)
        .with_relations(Some(g.relations))
        .with_ground_truth(Some(GroundTruthObject::from_scene(&g.scene)))
}

fn schema_field(e: Error) -> String {
    match e {
        Error::Schema { field, .. } => field,
        other => panic!("expected a schema error, got {other}"),
    }
}

fn edited(seed: u64, edit: impl FnOnce(&mut Value)) -> String {
    let mut v: Value = serde_json::from_str(&scene_to_string(&document(seed)).unwrap()).unwrap();
    edit(&mut v);
    v.to_string()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scene_text_round_trips(seed in 0u64..1000) {
        let doc = document(seed);
        let text = scene_to_string(&doc).unwrap();
        let back = parse_scene(&text, Strictness::Strict).unwrap();
        prop_assert_eq!(&back.scene, &doc.scene);
        prop_assert_eq!(&back.relations, &doc.relations);
        prop_assert_eq!(scene_to_string(&back).unwrap(), text);
    }
}

#[test]
fn files_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    let doc = document(5);
    save_scene(&doc, &path).unwrap();
    let back = load_scene(&path, Strictness::Strict).unwrap();
    for (a, b) in back.scene.poses().iter().zip(doc.scene.poses()) {
        assert_eq!(a.to_array().map(f64::to_bits), b.to_array().map(f64::to_bits));
    }
    assert_eq!(std::fs::read_to_string(&path).unwrap(), scene_to_string(&back).unwrap());
}

#[test]
fn missing_version_is_rejected() {
    let text = edited(1, |v| {
        v.as_object_mut().unwrap().remove("version");
    });
    assert_eq!(schema_field(parse_scene(&text, Strictness::Lenient).unwrap_err()), "version");
    let text = edited(1, |v| v["version"] = json!(99));
    assert_eq!(schema_field(parse_scene(&text, Strictness::Strict).unwrap_err()), "version");
}

#[test]
fn negative_size_names_the_field() {
    let text = edited(1, |v| v["objects"][2]["pose"]["size"][1] = json!(-0.5));
    assert_eq!(schema_field(parse_scene(&text, Strictness::Strict).unwrap_err()), "objects[2].pose.size[1]");
    let text = edited(1, |v| v["ground_truth"][0]["box"]["size"][0] = json!(0.0));
    assert_eq!(schema_field(parse_scene(&text, Strictness::Strict).unwrap_err()), "ground_truth[0].box");
}

#[test]
fn type_errors_carry_a_path() {
    let text = edited(1, |v| v["objects"][0]["pose"]["dist"] = json!("far"));
    assert!(schema_field(parse_scene(&text, Strictness::Strict).unwrap_err()).contains("objects[0].pose.dist"));
}

#[test]
fn unknown_fields_depend_on_strictness() {
    let text = edited(2, |v| {
        v["notes"] = json!({"author": "x"});
        v["objects"][1]["color"] = json!("red");
    });
    let field = schema_field(parse_scene(&text, Strictness::Strict).unwrap_err());
    assert!(field == "notes" || field == "objects[1].color", "{field}");

    let doc = parse_scene(&text, Strictness::Lenient).unwrap();
    let out: Value = serde_json::from_str(&scene_to_string(&doc).unwrap()).unwrap();
    assert_eq!(out["notes"], json!({"author": "x"}));
    assert_eq!(out["objects"][1]["color"], json!("red"));
    assert!(out["objects"][0].get("color").is_none());
}

#[test]
fn relations_must_cover_the_scene() {
    let text = edited(3, |v| {
        v["relations"]["attach_floor"].as_array_mut().unwrap().pop();
    });
    assert_eq!(schema_field(parse_scene(&text, Strictness::Strict).unwrap_err()), "relations");
}

#[test]
fn ground_truth_scene_uses_stored_boxes() {
    let doc = document(4);
    let gt = doc.ground_truth_scene().unwrap().unwrap();
    let truth = generate_scene(&GenConfig::with_seed(4)).unwrap().scene;
    for (a, b) in gt.boxes().iter().zip(truth.boxes()) {
        assert!((a.center - b.center).norm() < 1e-9);
    }
}

#[test]
fn weights_presets_and_files() {
    assert_eq!(load_weights("paper-igibson").unwrap(), TermWeights::igibson());
    assert_eq!(load_weights("paper-structured3d").unwrap(), TermWeights::structured3d());
    let w = TermWeights::igibson();
    assert_eq!(parse_weights(&weights_to_string(&w).unwrap()).unwrap(), w);
    assert!(parse_weights(r#"{"oc": -1}"#).is_err());
    assert!(load_weights("no-such-preset").is_err());
}

#[test]
fn generator_config_rejects_unknown_keys() {
    assert_eq!(parse_gen_config(r#"{"seed": 9}"#).unwrap(), GenConfig::with_seed(9));
    assert!(parse_gen_config(r#"{"seed": 9, "sead": 1}"#).is_err());
}

#[test]
fn trajectory_round_trip() {
    let doc = document(6);
    let model = EnergyModel::new(TermWeights::igibson());
    let config = OptimConfig {
        steps: 12,
        trajectory_stride: 5,
        ..OptimConfig::default()
    };
    let (_, traj) = optimize(&doc.scene, doc.relations.as_ref().unwrap(), &model, &config).unwrap();
    let text = trajectory_to_string(&traj).unwrap();
    let back = parse_trajectory(&text).unwrap();
    assert_eq!(back, traj);
    assert_eq!(trajectory_to_string(&back).unwrap(), text);
    assert!(parse_trajectory(r#"{"version": 1, "snapshots": []}"#).is_err());
}

#[test]
fn top_down_rendering_is_an_svg() {
    let doc = document(7);
    let svg = render_top_down(&doc.scene, doc.relations.as_ref(), None);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polygon").count(), 1 + doc.scene.objects().len());
}
