mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use roomopt::eval::{
    average_precision, collision_stats, iou3d, label_sphere, scene_collisions, semantic_sphere_iou, DetectionResult,
    GroundTruth, Prediction, SceneDetections, SemanticLabel,
};
use roomopt::math::Vec3;
use roomopt::scene::{CameraFrame, LayoutShell, OrientedBox, Scene};

use common::{cube, object, scene};

prop_compose! {
    fn any_box()(
        c in (-2.0..2.0f64, -1.0..1.0f64, -2.0..2.0f64),
        s in (0.2..1.5f64, 0.2..1.5f64, 0.2..1.5f64),
        yaw in -PI..PI,
    ) -> OrientedBox {
        OrientedBox::new(Vec3::new(c.0, c.1, c.2), Vec3::new(s.0, s.1, s.2), yaw)
    }
}

fn scaled(b: &OrientedBox, k: f64) -> OrientedBox {
    OrientedBox::new(b.center * k, b.size * k, b.yaw)
}

fn single(preds: &[(f64, f64)], gts: &[f64]) -> DetectionResult {
    let at = |x: f64| cube(Vec3::new(x, 0.0, 0.0), 1.0, 0.0);
    DetectionResult {
        scenes: vec![SceneDetections {
            predictions: preds
                .iter()
                .map(|&(x, confidence)| Prediction {
                    bbox: at(x),
                    category: 0,
                    confidence,
                })
                .collect(),
            ground_truth: gts.iter().map(|&x| GroundTruth { bbox: at(x), category: 0 }).collect(),
        }],
    }
}

proptest! {
    #[test]
    fn iou_symmetry_and_scale_invariance(a in any_box(), b in any_box(), k in 0.1..10.0f64) {
        let ab = iou3d(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, iou3d(&b, &a));
        prop_assert!((ab - iou3d(&scaled(&a, k), &scaled(&b, k))).abs() < 1e-9);
    }

    #[test]
    fn low_confidence_false_positive_never_raises_ap(
        preds in prop::collection::vec((-10.0..10.0f64, 0.1..1.0f64), 0..8),
        gts in prop::collection::vec(-10.0..10.0f64, 1..6),
    ) {
        let before = average_precision(&single(&preds, &gts), 0, 0.15).unwrap();
        let mut more = preds.clone();
        more.push((100.0, 0.01));
        let after = average_precision(&single(&more, &gts), 0, 0.15).unwrap();
        prop_assert!(after <= before + 1e-12, "{before} -> {after}");
    }
}

#[test]
fn ap_without_ground_truth_is_undefined() {
    assert_eq!(average_precision(&single(&[(0.0, 0.5)], &[]), 0, 0.15), None);
}

#[test]
fn interpenetrating_pair_counts_once() {
    let s = scene(vec![
        object(0, cube(Vec3::new(0.0, -1.1, 2.0), 1.0, 0.0)),
        object(1, cube(Vec3::new(0.5, -1.1, 2.0), 1.0, 0.3)),
    ]);
    let c = scene_collisions(&s, 0.1);
    assert_eq!(c.collision_times, 1);
    assert_eq!(c.objects_hit_object, 2);
    assert_eq!((c.objects_hit_floor, c.objects_hit_wall, c.objects_hit_ceiling), (0, 0, 0));
}

#[test]
fn layout_collisions_are_counted_per_surface() {
    let s = scene(vec![
        // through the x = 3 wall
        object(0, cube(Vec3::new(2.9, -1.1, 0.0), 1.0, 0.0)),
        // through the floor at y = -1.6
        object(1, cube(Vec3::new(0.0, -1.5, 2.0), 1.0, 0.0)),
        // through the ceiling at y = 1.2
        object(2, cube(Vec3::new(0.0, 1.1, -2.0), 1.0, 0.0)),
    ]);
    let stats = collision_stats(&[s], 0.1);
    let c = &stats.per_scene[0];
    assert_eq!((c.objects_hit_wall, c.objects_hit_floor, c.objects_hit_ceiling), (1, 1, 1));
    assert_eq!(c.collision_times, 0);
    assert_eq!(stats.avg_objects_hit_wall, 1.0);
}

#[test]
fn contact_within_tolerance_is_not_a_collision() {
    let s = scene(vec![
        object(0, cube(Vec3::new(0.0, -1.1, 2.0), 1.0, 0.0)),
        object(1, cube(Vec3::new(0.96, -1.1, 2.0), 1.0, 0.0)),
    ]);
    assert_eq!(scene_collisions(&s, 0.1).collision_times, 0);
    assert_eq!(scene_collisions(&s, 0.0).collision_times, 1);
}

fn empty_room() -> Scene {
    Scene::new(CameraFrame::default(), LayoutShell::rectangle(-3.0, -3.0, 3.0, 3.0, -1.6, 1.2), vec![]).unwrap()
}

#[test]
fn empty_rooms_agree_everywhere() {
    let r = semantic_sphere_iou(&empty_room(), &empty_room(), 5000).unwrap();
    assert_eq!(r.mean, 1.0);
    assert_eq!(r.per_class.keys().cloned().collect::<Vec<_>>(), ["ceiling", "floor", "wall"]);
    assert!(semantic_sphere_iou(&empty_room(), &empty_room(), 0).is_err());
}

#[test]
fn labelled_fraction_matches_solid_angle() {
    // square face of half-side a at distance 3a straight ahead
    let a = 0.3;
    let b = OrientedBox::new(Vec3::new(0.0, 0.0, 3.0 * a + 0.25), Vec3::new(2.0 * a, 2.0 * a, 0.5), 0.0);
    let s = scene(vec![object(4, b)]);
    let n = 100_000;
    let hits = label_sphere(&s, n).into_iter().filter(|l| *l == SemanticLabel::Object(4)).count();
    let expected = 4.0 * (0.1f64).asin() / (4.0 * PI);
    let measured = hits as f64 / n as f64;
    assert!((measured - expected).abs() <= 2.0 / (n as f64).sqrt(), "{measured} vs {expected}");

    let r = semantic_sphere_iou(&s, &empty_room(), n).unwrap();
    assert_eq!(r.per_class["object_4"], 0.0);
    assert!(r.per_class["floor"] == 1.0 && r.per_class["ceiling"] == 1.0);
    assert!(r.per_class["wall"] < 1.0);
}
