//! Metrics: 3D box IoU and detection AP, collision statistics, and semantic
//! IoU over directions sampled on the viewing sphere.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::collision::{intersects, order_key};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::polygon;
use crate::scene::{OrientedBox, Scene};

/// Match threshold used for mAP by default.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.15;
pub const DEFAULT_COLLISION_TOLERANCE: f64 = 0.1;

fn clip_half_plane(poly: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    // keeps the left side of a→b
    let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (sp, sq) = (side(p), side(q));
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp >= 0.0) != (sq >= 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Area of the intersection of two counter-clockwise convex polygons.
fn convex_intersection_area(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> f64 {
    let mut poly = subject.to_vec();
    for i in 0..clip.len() {
        if poly.is_empty() {
            return 0.0;
        }
        poly = clip_half_plane(&poly, clip[i], clip[(i + 1) % clip.len()]);
    }
    if poly.len() < 3 {
        0.0
    } else {
        polygon::signed_area(&poly).max(0.0)
    }
}

/// Intersection volume of two yaw-only boxes.
pub fn intersection_volume(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let dy = a.top().min(b.top()) - a.bottom().max(b.bottom());
    if dy <= 0.0 {
        return 0.0;
    }
    convex_intersection_area(&a.footprint(), &b.footprint()) * dy
}

/// Volumetric IoU of two yaw-only boxes. Symmetric in its arguments.
pub fn iou3d(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let (a, b) = if order_key(b) < order_key(a) { (b, a) } else { (a, b) };
    let inter = intersection_volume(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "box")]
    pub bbox: OrientedBox,
    pub category: u32,
    pub confidence: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(rename = "box")]
    pub bbox: OrientedBox,
    pub category: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneDetections {
    pub predictions: Vec<Prediction>,
    pub ground_truth: Vec<GroundTruth>,
}

impl SceneDetections {
    /// Optimized objects as predictions (confidence from the detection
    /// score) against the boxes of a ground-truth scene.
    pub fn from_scenes(pred: &Scene, gt: &Scene) -> Self {
        Self {
            predictions: pred
                .objects()
                .iter()
                .map(|o| Prediction {
                    bbox: o.oriented_box(),
                    category: o.category,
                    confidence: o.detection.score.clamp(0.0, 1.0),
                })
                .collect(),
            ground_truth: gt
                .objects()
                .iter()
                .map(|o| GroundTruth {
                    bbox: o.oriented_box(),
                    category: o.category,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub scenes: Vec<SceneDetections>,
}

impl DetectionResult {
    pub fn validate(&self) -> Result<()> {
        for (s, scene) in self.scenes.iter().enumerate() {
            for (k, p) in scene.predictions.iter().enumerate() {
                if !(0.0..=1.0).contains(&p.confidence) {
                    return Err(Error::Config(format!(
                        "scene {s} prediction {k}: confidence {} outside [0, 1]",
                        p.confidence
                    )));
                }
                p.bbox.validate()?;
            }
            for g in &scene.ground_truth {
                g.bbox.validate()?;
            }
        }
        Ok(())
    }

    pub fn gt_categories(&self) -> BTreeSet<u32> {
        self.scenes.iter().flat_map(|s| s.ground_truth.iter().map(|g| g.category)).collect()
    }
}

/// Area under the all-point interpolated precision-recall curve.
///
/// Returns `None` when the category has no ground truth.
pub fn average_precision(results: &DetectionResult, category: u32, iou_threshold: f64) -> Option<f64> {
    let n_gt: usize = results
        .scenes
        .iter()
        .map(|s| s.ground_truth.iter().filter(|g| g.category == category).count())
        .sum();
    if n_gt == 0 {
        return None;
    }

    let mut preds: Vec<(usize, usize, f64)> = results
        .scenes
        .iter()
        .enumerate()
        .flat_map(|(s, scene)| {
            scene
                .predictions
                .iter()
                .enumerate()
                .filter(|(_, p)| p.category == category)
                .map(move |(k, p)| (s, k, p.confidence))
        })
        .collect();
    preds.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut matched: Vec<Vec<bool>> = results.scenes.iter().map(|s| vec![false; s.ground_truth.len()]).collect();
    let mut tp = Vec::with_capacity(preds.len());
    for &(s, k, _) in &preds {
        let scene = &results.scenes[s];
        let p = &scene.predictions[k];
        let best = scene
            .ground_truth
            .iter()
            .enumerate()
            .filter(|(g, gt)| gt.category == category && !matched[s][*g])
            .map(|(g, gt)| (g, iou3d(&p.bbox, &gt.bbox)))
            .fold(None, |acc: Option<(usize, f64)>, (g, iou)| match acc {
                Some((_, best)) if best >= iou => acc,
                _ => Some((g, iou)),
            });
        match best {
            Some((g, iou)) if iou >= iou_threshold => {
                matched[s][g] = true;
                tp.push(true);
            }
            _ => tp.push(false),
        }
    }

    let mut recall = Vec::with_capacity(tp.len());
    let mut precision = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += usize::from(t);
        recall.push(hits as f64 / n_gt as f64);
        precision.push(hits as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    Some(ap)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub iou_threshold: f64,
    pub per_category: BTreeMap<u32, f64>,
    /// Mean over categories present in the ground truth; `None` without ground truth.
    pub mean: Option<f64>,
}

pub fn mean_average_precision(results: &DetectionResult, iou_threshold: f64) -> MapReport {
    let per_category: BTreeMap<u32, f64> = results
        .gt_categories()
        .into_iter()
        .filter_map(|c| average_precision(results, c, iou_threshold).map(|ap| (c, ap)))
        .collect();
    let mean = (!per_category.is_empty()).then(|| per_category.values().sum::<f64>() / per_category.len() as f64);
    MapReport {
        iou_threshold,
        per_category,
        mean,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionCounts {
    /// Colliding object pairs.
    pub collision_times: usize,
    pub objects_hit_object: usize,
    pub objects_hit_ceiling: usize,
    pub objects_hit_floor: usize,
    pub objects_hit_wall: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionStats {
    pub tolerance: f64,
    pub per_scene: Vec<CollisionCounts>,
    pub avg_collision_times: f64,
    pub avg_objects_hit_object: f64,
    pub avg_objects_hit_ceiling: f64,
    pub avg_objects_hit_floor: f64,
    pub avg_objects_hit_wall: f64,
}

/// Collision counts for one scene. Each box is shrunk by `tolerance / 2` per
/// side first; a negative tolerance grows them instead.
pub fn scene_collisions(scene: &Scene, tolerance: f64) -> CollisionCounts {
    let boxes: Vec<OrientedBox> = scene.boxes().iter().map(|b| b.inflated(-0.5 * tolerance)).collect();
    let layout = scene.layout();
    let mut hit = vec![false; boxes.len()];
    let mut counts = CollisionCounts::default();
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            if intersects(&boxes[i], &boxes[j]) {
                counts.collision_times += 1;
                hit[i] = true;
                hit[j] = true;
            }
        }
    }
    counts.objects_hit_object = hit.iter().filter(|h| **h).count();
    for b in &boxes {
        counts.objects_hit_ceiling += usize::from(b.top() > layout.ceiling_y);
        counts.objects_hit_floor += usize::from(b.bottom() < layout.floor_y);
        counts.objects_hit_wall += usize::from(b.footprint().iter().any(|p| !layout.contains_xz(*p)));
    }
    counts
}

pub fn collision_stats(scenes: &[Scene], tolerance: f64) -> CollisionStats {
    let per_scene: Vec<CollisionCounts> = scenes.iter().map(|s| scene_collisions(s, tolerance)).collect();
    let n = per_scene.len().max(1) as f64;
    let avg = |f: fn(&CollisionCounts) -> usize| per_scene.iter().map(f).sum::<usize>() as f64 / n;
    CollisionStats {
        tolerance,
        avg_collision_times: avg(|c| c.collision_times),
        avg_objects_hit_object: avg(|c| c.objects_hit_object),
        avg_objects_hit_ceiling: avg(|c| c.objects_hit_ceiling),
        avg_objects_hit_floor: avg(|c| c.objects_hit_floor),
        avg_objects_hit_wall: avg(|c| c.objects_hit_wall),
        per_scene,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticLabel {
    Object(u32),
    Floor,
    Ceiling,
    Wall,
}

impl std::fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Object(c) => write!(f, "object_{c}"),
            Self::Floor => f.write_str("floor"),
            Self::Ceiling => f.write_str("ceiling"),
            Self::Wall => f.write_str("wall"),
        }
    }
}

/// Deterministic, near-uniform directions on the unit sphere.
pub fn fibonacci_sphere(samples: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..samples)
        .map(|i| {
            let y = 1.0 - (2.0 * i as f64 + 1.0) / samples as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

/// Entry distance of a ray from `origin` along `dir` into the box, if any.
pub fn ray_box(b: &OrientedBox, origin: Vec3, dir: Vec3) -> Option<f64> {
    let lo = b.to_local(origin);
    let ld = [dir.dot(b.axis_x()), dir.y, dir.dot(b.axis_z())];
    let lp = [lo.x, lo.y, lo.z];
    let h = b.half().as_array();
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if ld[k].abs() < 1e-300 {
            if lp[k].abs() > h[k] {
                return None;
            }
            continue;
        }
        let a = (-h[k] - lp[k]) / ld[k];
        let c = (h[k] - lp[k]) / ld[k];
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    if t0 > t1 || t1 < 0.0 {
        return None;
    }
    Some(t0.max(0.0))
}

/// Label seen from the camera along `dir`.
pub fn label_direction(scene: &Scene, dir: Vec3) -> SemanticLabel {
    let layout = scene.layout();
    let origin = Vec3::new(0.0, 0.0, 0.0);
    let mut best = (f64::INFINITY, SemanticLabel::Wall);

    let horiz = (dir.x * dir.x + dir.z * dir.z).sqrt();
    if horiz > 0.0 {
        for (a, b) in layout.edges() {
            if let Some(t) = ray_segment(dir, a, b) {
                if t < best.0 {
                    best = (t, SemanticLabel::Wall);
                }
            }
        }
    }
    if dir.y < 0.0 {
        let t = layout.floor_y / dir.y;
        if t < best.0 {
            best = (t, SemanticLabel::Floor);
        }
    } else if dir.y > 0.0 {
        let t = layout.ceiling_y / dir.y;
        if t < best.0 {
            best = (t, SemanticLabel::Ceiling);
        }
    }
    for o in scene.objects() {
        if let Some(t) = ray_box(&o.oriented_box(), origin, dir) {
            if t < best.0 {
                best = (t, SemanticLabel::Object(o.category));
            }
        }
    }
    best.1
}

/// Ray parameter where the horizontal projection of `dir` from the origin
/// crosses segment `ab`.
fn ray_segment(dir: Vec3, a: [f64; 2], b: [f64; 2]) -> Option<f64> {
    let (dx, dz) = (dir.x, dir.z);
    let (ex, ez) = (b[0] - a[0], b[1] - a[1]);
    let denom = dx * ez - dz * ex;
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = (a[0] * ez - a[1] * ex) / denom;
    let s = (a[0] * dz - a[1] * dx) / denom;
    (t > 0.0 && (0.0..=1.0).contains(&s)).then_some(t)
}

pub fn label_sphere(scene: &Scene, samples: usize) -> Vec<SemanticLabel> {
    fibonacci_sphere(samples).into_iter().map(|d| label_direction(scene, d)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereIou {
    pub samples: usize,
    pub per_class: BTreeMap<String, f64>,
    pub mean: f64,
}

/// Per-class IoU of the labels seen along sampled directions, and their mean
/// over classes present in either scene.
pub fn semantic_sphere_iou(pred: &Scene, gt: &Scene, samples: usize) -> Result<SphereIou> {
    if samples == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let lp = label_sphere(pred, samples);
    let lg = label_sphere(gt, samples);
    let mut counts: BTreeMap<SemanticLabel, (usize, usize)> = BTreeMap::new();
    for (p, g) in lp.iter().zip(&lg) {
        if p == g {
            counts.entry(*p).or_default().0 += 1;
            counts.entry(*p).or_default().1 += 1;
        } else {
            counts.entry(*p).or_default().1 += 1;
            counts.entry(*g).or_default().1 += 1;
        }
    }
    let per_class: BTreeMap<String, f64> = counts
        .iter()
        .map(|(label, (inter, union))| (label.to_string(), *inter as f64 / *union as f64))
        .collect();
    let mean = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(SphereIou {
        samples,
        per_class,
        mean,
    })
}
