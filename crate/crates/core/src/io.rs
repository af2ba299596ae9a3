//! JSON documents for scenes, weights, generator configs and trajectories,
//! plus top-down SVG frames.
//!
//! Scene files carry a `version` field. In strict mode keys the reader does
//! not know are rejected; in lenient mode they are kept and written back on
//! save. Canonical output has sorted keys and shortest round-trip floats, so
//! saving the same document twice produces identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::collision::intersects;
use crate::energy::TermWeights;
use crate::error::{Error, Result};
use crate::optimizer::{Snapshot, Trajectory};
use crate::relations::RelationSet;
use crate::scene::{CameraFrame, LayoutShell, ObjectInstance, OrientedBox, PoseParams, Scene};
use crate::synth::GenConfig;

pub const SCENE_VERSION: u32 = 1;
pub const TRAJECTORY_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub id: u32,
    pub category: u32,
    #[serde(rename = "box")]
    pub bbox: OrientedBox,
}

impl GroundTruthObject {
    pub fn from_scene(scene: &Scene) -> Vec<Self> {
        scene
            .objects()
            .iter()
            .map(|o| Self {
                id: o.id,
                category: o.category,
                bbox: o.oriented_box(),
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    version: u32,
    camera: CameraFrame,
    layout: LayoutShell,
    objects: Vec<ObjectInstance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relations: Option<RelationSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<Vec<GroundTruthObject>>,
}

/// Everything a scene file holds.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneDocument {
    pub scene: Scene,
    pub relations: Option<RelationSet>,
    pub ground_truth: Option<Vec<GroundTruthObject>>,
    /// Unknown keys kept by a lenient load, shaped like the document.
    pub extra: Value,
}

impl SceneDocument {
    pub fn new(scene: Scene) -> Self {
        Self {
            scene,
            relations: None,
            ground_truth: None,
            extra: Value::Null,
        }
    }

    pub fn with_relations(mut self, relations: Option<RelationSet>) -> Self {
        self.relations = relations;
        self
    }

    pub fn with_ground_truth(mut self, gt: Option<Vec<GroundTruthObject>>) -> Self {
        self.ground_truth = gt;
        self
    }

    /// Ground truth as a scene in the same room, matched to the objects by id.
    pub fn ground_truth_scene(&self) -> Result<Option<Scene>> {
        let Some(gt) = &self.ground_truth else {
            return Ok(None);
        };
        let objects = gt
            .iter()
            .map(|g| {
                let det = self
                    .scene
                    .objects()
                    .iter()
                    .find(|o| o.id == g.id)
                    .map(|o| o.detection)
                    .ok_or_else(|| Error::schema("ground_truth", format!("no object with id {}", g.id)))?;
                let pose = crate::scene::box_to_pose(&g.bbox, det.center);
                Ok(ObjectInstance::new(g.id, g.category, det, pose, 1.0))
            })
            .collect::<Result<Vec<_>>>()?;
        self.scene.with_objects(objects).map(Some)
    }
}

fn json_error(e: serde_json::Error) -> Error {
    Error::schema(format!("<line {} column {}>", e.line(), e.column()), e.to_string())
}

fn typed<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(if path == "." { "<root>".to_string() } else { path }, e.inner().to_string())
    })
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Paths of keys in `raw` that do not survive a typed round trip. Null values are ignored.
fn unknown_keys(raw: &Value, canon: &Value, path: &str, out: &mut Vec<String>) {
    match (raw, canon) {
        (Value::Object(r), Value::Object(c)) => {
            for (k, v) in r {
                if v.is_null() {
                    continue;
                }
                match c.get(k) {
                    None => out.push(join(path, k)),
                    Some(cv) => unknown_keys(v, cv, &join(path, k), out),
                }
            }
        }
        (Value::Array(r), Value::Array(c)) => {
            for (i, (rv, cv)) in r.iter().zip(c).enumerate() {
                unknown_keys(rv, cv, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

/// The parts of `raw` missing from `canon`, or `Null` if none.
fn unknown_part(raw: &Value, canon: &Value) -> Value {
    match (raw, canon) {
        (Value::Object(r), Value::Object(c)) => {
            let mut out = Map::new();
            for (k, v) in r {
                if v.is_null() {
                    continue;
                }
                match c.get(k) {
                    None => {
                        out.insert(k.clone(), v.clone());
                    }
                    Some(cv) => {
                        let sub = unknown_part(v, cv);
                        if !sub.is_null() {
                            out.insert(k.clone(), sub);
                        }
                    }
                }
            }
            if out.is_empty() {
                Value::Null
            } else {
                Value::Object(out)
            }
        }
        (Value::Array(r), Value::Array(c)) => {
            let parts: Vec<Value> = r.iter().zip(c).map(|(rv, cv)| unknown_part(rv, cv)).collect();
            if parts.iter().all(Value::is_null) {
                Value::Null
            } else {
                Value::Array(parts)
            }
        }
        _ => Value::Null,
    }
}

fn merge(into: &mut Value, extra: &Value) {
    match (into, extra) {
        (Value::Object(dst), Value::Object(src)) => {
            for (k, v) in src {
                match dst.get_mut(k) {
                    Some(d) => merge(d, v),
                    None => {
                        dst.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (Value::Array(dst), Value::Array(src)) => {
            for (d, s) in dst.iter_mut().zip(src) {
                merge(d, s);
            }
        }
        _ => {}
    }
}

fn check_strict(raw: &Value, canon: &Value) -> Result<()> {
    let mut unknown = Vec::new();
    unknown_keys(raw, canon, "", &mut unknown);
    match unknown.first() {
        Some(path) => Err(Error::schema(path.clone(), "unknown field")),
        None => Ok(()),
    }
}

fn positive(path: String, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::schema(path, format!("must be positive, got {v}")))
    }
}

fn check_pose(path: &str, p: &PoseParams) -> Result<()> {
    for (k, v) in p.to_array().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::schema(format!("{path}[{k}]"), "must be finite"));
        }
    }
    positive(format!("{path}.dist"), p.dist)?;
    for (k, s) in p.size.as_array().iter().enumerate() {
        positive(format!("{path}.size[{k}]"), *s)?;
    }
    Ok(())
}

fn check_document(doc: &SceneFile) -> Result<()> {
    if doc.version != SCENE_VERSION {
        return Err(Error::schema(
            "version",
            format!("unsupported version {} (expected {SCENE_VERSION})", doc.version),
        ));
    }
    positive("camera.height_above_floor".into(), doc.camera.height_above_floor)?;
    doc.layout.validate().map_err(|e| Error::schema("layout", e.to_string()))?;
    for (i, o) in doc.objects.iter().enumerate() {
        let at = |f: &str| format!("objects[{i}].{f}");
        check_pose(&at("pose"), &o.pose)?;
        check_pose(&at("initial_pose"), o.initial_pose())?;
        o.detection.validate().map_err(|e| Error::schema(at("detection"), e.to_string()))?;
        if !(0.0..=1.0).contains(&o.in_room_likelihood) {
            return Err(Error::schema(at("in_room_likelihood"), "must lie in [0, 1]"));
        }
    }
    if let Some(gt) = &doc.ground_truth {
        for (i, g) in gt.iter().enumerate() {
            g.bbox.validate().map_err(|e| Error::schema(format!("ground_truth[{i}].box"), e.to_string()))?;
        }
    }
    Ok(())
}

/// Parses a scene document.
pub fn parse_scene(text: &str, mode: Strictness) -> Result<SceneDocument> {
    let raw: Value = serde_json::from_str(text).map_err(json_error)?;
    if raw.get("version").is_none_or(Value::is_null) {
        return Err(Error::schema("version", "missing field"));
    }
    let file: SceneFile = typed(raw.clone())?;
    let canon = serde_json::to_value(&file).map_err(json_error)?;
    let extra = match mode {
        Strictness::Strict => {
            check_strict(&raw, &canon)?;
            Value::Null
        }
        Strictness::Lenient => unknown_part(&raw, &canon),
    };
    check_document(&file)?;
    let scene = Scene::new(file.camera, file.layout, file.objects).map_err(|e| Error::schema("<root>", e.to_string()))?;
    if let Some(r) = &file.relations {
        r.validate(scene.objects().len(), scene.walls().len())
            .map_err(|e| Error::schema("relations", e.to_string()))?;
    }
    Ok(SceneDocument {
        scene,
        relations: file.relations,
        ground_truth: file.ground_truth,
        extra,
    })
}

/// Canonical text of a scene document.
pub fn scene_to_string(doc: &SceneDocument) -> Result<String> {
    let file = SceneFile {
        version: SCENE_VERSION,
        camera: *doc.scene.camera(),
        layout: doc.scene.layout().clone(),
        objects: doc.scene.objects().to_vec(),
        relations: doc.relations.clone(),
        ground_truth: doc.ground_truth.clone(),
    };
    let mut value = serde_json::to_value(&file).map_err(json_error)?;
    merge(&mut value, &doc.extra);
    canonical_text(&value)
}

fn canonical_text(value: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(json_error)?;
    s.push('\n');
    Ok(s)
}

pub fn load_scene(path: impl AsRef<Path>, mode: Strictness) -> Result<SceneDocument> {
    parse_scene(&std::fs::read_to_string(path)?, mode)
}

pub fn save_scene(doc: &SceneDocument, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scene_to_string(doc)?)?;
    Ok(())
}

/// Parses a weights document; every term must be present.
pub fn parse_weights(text: &str) -> Result<TermWeights> {
    let raw: Value = serde_json::from_str(text).map_err(json_error)?;
    let w: TermWeights = typed(raw)?;
    w.validate()?;
    Ok(w)
}

/// Resolves a preset name or reads a weights file.
pub fn load_weights(spec: &str) -> Result<TermWeights> {
    if let Some(w) = TermWeights::preset(spec) {
        return Ok(w);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::Config(format!("`{spec}` is neither a weight preset nor a file")));
    }
    parse_weights(&std::fs::read_to_string(path)?)
}

pub fn weights_to_string(w: &TermWeights) -> Result<String> {
    canonical_text(&serde_json::to_value(w).map_err(json_error)?)
}

/// Parses a generator config; omitted keys take their defaults.
pub fn parse_gen_config(text: &str) -> Result<GenConfig> {
    let raw: Value = serde_json::from_str(text).map_err(json_error)?;
    let cfg: GenConfig = typed(raw)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_gen_config(path: impl AsRef<Path>) -> Result<GenConfig> {
    parse_gen_config(&std::fs::read_to_string(path)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryFile {
    version: u32,
    snapshots: Vec<Snapshot>,
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    let raw: Value = serde_json::from_str(text).map_err(json_error)?;
    if raw.get("version").is_none_or(Value::is_null) {
        return Err(Error::schema("version", "missing field"));
    }
    let file: TrajectoryFile = typed(raw)?;
    if file.version != TRAJECTORY_VERSION {
        return Err(Error::schema("version", format!("unsupported version {}", file.version)));
    }
    for (i, s) in file.snapshots.iter().enumerate() {
        for (k, p) in s.poses.iter().enumerate() {
            check_pose(&format!("snapshots[{i}].poses[{k}]"), p)?;
        }
    }
    let traj = Trajectory {
        snapshots: file.snapshots,
    };
    let objects = traj.first().map_or(0, |s| s.poses.len());
    traj.validate(objects)?;
    Ok(traj)
}

pub fn trajectory_to_string(t: &Trajectory) -> Result<String> {
    let file = TrajectoryFile {
        version: TRAJECTORY_VERSION,
        snapshots: t.snapshots.clone(),
    };
    canonical_text(&serde_json::to_value(&file).map_err(json_error)?)
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    parse_trajectory(&std::fs::read_to_string(path)?)
}

pub fn save_trajectory(t: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, trajectory_to_string(t)?)?;
    Ok(())
}

/// Any serializable report as canonical JSON text.
pub fn to_canonical_json<T: Serialize>(v: &T) -> Result<String> {
    canonical_text(&serde_json::to_value(v).map_err(json_error)?)
}

const PX_PER_M: f64 = 100.0;

fn points(pts: &[[f64; 2]]) -> String {
    pts.iter()
        .map(|p| format!("{:.1},{:.1}", p[0] * PX_PER_M, p[1] * PX_PER_M))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Bird's-eye view: room outline, ground-truth footprints in gray, current
/// footprints colored by category, attachments as thick white lines and
/// colliding objects outlined in red.
pub fn render_top_down(scene: &Scene, relations: Option<&RelationSet>, ground_truth: Option<&[OrientedBox]>) -> String {
    let poly = &scene.layout().floor_polygon;
    let (mut lo, mut hi) = ([0.0f64; 2], [0.0f64; 2]);
    for p in poly {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let margin = 0.5;
    let (x0, z0) = ((lo[0] - margin) * PX_PER_M, (lo[1] - margin) * PX_PER_M);
    let (w, h) = ((hi[0] - lo[0] + 2.0 * margin) * PX_PER_M, (hi[1] - lo[1] + 2.0 * margin) * PX_PER_M);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.1} {z0:.1} {w:.1} {h:.1}" width="{w:.0}" height="{h:.0}">"#
    );
    let _ = writeln!(svg, r##"<rect x="{x0:.1}" y="{z0:.1}" width="{w:.1}" height="{h:.1}" fill="#202020"/>"##);
    let _ = writeln!(svg, r##"<polygon points="{}" fill="#3a3a3a" stroke="#d0d0d0" stroke-width="4"/>"##, points(poly));

    if let Some(gt) = ground_truth {
        for b in gt {
            let _ = writeln!(
                svg,
                r##"<polygon points="{}" fill="none" stroke="#909090" stroke-width="2" stroke-dasharray="6 4"/>"##,
                points(&b.footprint())
            );
        }
    }

    let boxes = scene.boxes();
    let mut colliding = vec![false; boxes.len()];
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            if intersects(&boxes[i], &boxes[j]) {
                colliding[i] = true;
                colliding[j] = true;
            }
        }
        if boxes[i].footprint().iter().any(|p| !scene.layout().contains_xz(*p)) {
            colliding[i] = true;
        }
    }
    for ((o, b), hit) in scene.objects().iter().zip(&boxes).zip(&colliding) {
        let hue = (o.category * 67) % 360;
        let stroke = if *hit { "#ff2020" } else { "#101010" };
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="hsl({hue},60%,55%)" fill-opacity="0.8" stroke="{stroke}" stroke-width="3"/>"#,
            points(&b.footprint())
        );
        // front face marker
        let f = b.center + b.axis_z() * (0.5 * b.size.z);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#101010" stroke-width="2"/>"##,
            b.center.x * PX_PER_M,
            b.center.z * PX_PER_M,
            f.x * PX_PER_M,
            f.z * PX_PER_M
        );
    }

    if let Some(r) = relations {
        let walls = scene.walls();
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if r.attach_obj.get(i).and_then(|row| row.get(j)).is_some_and(|l| l.value) {
                    let (a, b) = (boxes[i].center, boxes[j].center);
                    let _ = writeln!(
                        svg,
                        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ffffff" stroke-width="5"/>"##,
                        a.x * PX_PER_M,
                        a.z * PX_PER_M,
                        b.x * PX_PER_M,
                        b.z * PX_PER_M
                    );
                }
            }
            for (k, wall) in walls.iter().enumerate() {
                let attached = r.attach_wall.get(i).and_then(|row| row.get(k)).is_some_and(|l| l.value);
                if attached {
                    // segment from the box center to the wall's inner face
                    let c = boxes[i].center;
                    let l = wall.to_local(c);
                    let inner = wall.local_to_world(crate::math::Vec3::new(
                        l.x.clamp(-0.5 * wall.size.x, 0.5 * wall.size.x),
                        l.y,
                        l.z.clamp(-0.5 * wall.size.z, 0.5 * wall.size.z),
                    ));
                    let _ = writeln!(
                        svg,
                        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ffffff" stroke-width="5"/>"##,
                        c.x * PX_PER_M,
                        c.z * PX_PER_M,
                        inner.x * PX_PER_M,
                        inner.z * PX_PER_M
                    );
                }
            }
        }
    }

    let _ = writeln!(svg, r##"<circle cx="0" cy="0" r="8" fill="#ffd000"/>"##);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_found_with_paths() {
        let raw: Value = serde_json::json!({"a": 1, "b": {"c": 2, "x": 3}, "l": [{"k": 1}, {"k": 2, "y": null, "z": 0}]});
        let canon: Value = serde_json::json!({"a": 1, "b": {"c": 2}, "l": [{"k": 1}, {"k": 2}]});
        let mut out = Vec::new();
        unknown_keys(&raw, &canon, "", &mut out);
        assert_eq!(out, vec!["b.x", "l[1].z"]);
        let extra = unknown_part(&raw, &canon);
        assert_eq!(extra, serde_json::json!({"b": {"x": 3}, "l": [null, {"z": 0}]}));
        let mut merged = canon.clone();
        merge(&mut merged, &extra);
        assert_eq!(merged, serde_json::json!({"a": 1, "b": {"c": 2, "x": 3}, "l": [{"k": 1}, {"k": 2, "z": 0}]}));
    }
}
