//! Relation labels and geometric features derived from a scene.
//!
//! The extractor reads relations straight off the geometry, so on a
//! ground-truth scene it yields the labels a perfect relation predictor would.

use std::f64::consts::{FRAC_PI_4, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collision::{contact_test, sat_profile, AxisMode};
use crate::error::{Error, Result};
use crate::math::wrap_angle;
use crate::polygon;
use crate::scene::{OrientedBox, Scene};

pub const DEFAULT_CONTACT_TOLERANCE: f64 = 0.1;
pub const ROTATION_BINS: u8 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub value: bool,
    pub confidence: f64,
}

impl Label {
    pub fn certain(value: bool) -> Self {
        Self { value, confidence: 1.0 }
    }

    /// Weight the label applies to its energy term.
    pub fn weight(&self) -> f64 {
        if self.value {
            self.confidence
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotLabel {
    pub bin: u8,
    pub confidence: f64,
}

impl RotLabel {
    /// Relative angle at the center of the bin.
    pub fn target(&self) -> f64 {
        wrap_angle(self.bin as f64 * FRAC_PI_4)
    }
}

/// Pairwise and object-layout relation labels for `n` objects and `w` walls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationSet {
    /// `n × n`: bin of `yaw_j - yaw_i`.
    pub rot_obj: Vec<Vec<RotLabel>>,
    /// `n × w`: bin of `yaw_wall - yaw_i`.
    pub rot_wall: Vec<Vec<RotLabel>>,
    /// `n × n`, symmetric.
    pub attach_obj: Vec<Vec<Label>>,
    /// `n × w`.
    pub attach_wall: Vec<Vec<Label>>,
    pub attach_floor: Vec<Label>,
    pub attach_ceiling: Vec<Label>,
    pub in_room: Vec<f64>,
    /// `n × n`: center of `i` is farther from the camera than center of `j`.
    pub farther: Vec<Vec<Label>>,
}

fn check_matrix<T>(m: &[Vec<T>], rows: usize, cols: usize, name: &str) -> Result<()> {
    if m.len() != rows {
        return Err(Error::Relations(format!("{name}: expected {rows} rows, found {}", m.len())));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Relations(format!(
                "{name}[{i}]: expected {cols} entries, found {}",
                row.len()
            )));
        }
    }
    Ok(())
}

impl RelationSet {
    pub fn object_count(&self) -> usize {
        self.attach_floor.len()
    }

    /// Checks that every relation the energy reads exists for `objects` objects and `walls` walls.
    pub fn validate(&self, objects: usize, walls: usize) -> Result<()> {
        check_matrix(&self.rot_obj, objects, objects, "rot_obj")?;
        check_matrix(&self.rot_wall, objects, walls, "rot_wall")?;
        check_matrix(&self.attach_obj, objects, objects, "attach_obj")?;
        check_matrix(&self.attach_wall, objects, walls, "attach_wall")?;
        check_matrix(&self.farther, objects, objects, "farther")?;
        for (name, v) in [("attach_floor", self.attach_floor.len()), ("attach_ceiling", self.attach_ceiling.len()), ("in_room", self.in_room.len())] {
            if v != objects {
                return Err(Error::Relations(format!("{name}: expected {objects} entries, found {v}")));
            }
        }
        let labels = self
            .attach_obj
            .iter()
            .chain(&self.attach_wall)
            .chain(&self.farther)
            .flatten()
            .chain(&self.attach_floor)
            .chain(&self.attach_ceiling);
        for l in labels {
            if !(0.0..=1.0).contains(&l.confidence) {
                return Err(Error::Relations(format!("confidence {} outside [0, 1]", l.confidence)));
            }
        }
        for r in self.rot_obj.iter().chain(&self.rot_wall).flatten() {
            if r.bin >= ROTATION_BINS || !(0.0..=1.0).contains(&r.confidence) {
                return Err(Error::Relations(format!("invalid rotation label {r:?}")));
            }
        }
        if self.in_room.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Relations("in_room likelihood outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Index of the 45° bin centered nearest to `angle`; exact half-way angles go to the upper bin.
pub fn bin_angle(angle: f64) -> u8 {
    let a = angle.rem_euclid(TAU);
    ((a / FRAC_PI_4 + 0.5).floor() as i64).rem_euclid(ROTATION_BINS as i64) as u8
}

/// Labels read off the scene geometry, all with confidence 1.
///
/// Attachment uses [`contact_test`] at `tolerance`; floor and ceiling
/// attachment hold when the bottom (top) face lies within `tolerance` of the
/// plane. The front face is the local `+z` face.
pub fn extract_relations(scene: &Scene, tolerance: f64) -> RelationSet {
    let boxes = scene.boxes();
    let walls = scene.walls();
    let layout = scene.layout();
    let n = boxes.len();
    let rot = |from: &OrientedBox, to: &OrientedBox| RotLabel {
        bin: bin_angle(to.yaw - from.yaw),
        confidence: 1.0,
    };
    let dists: Vec<f64> = scene.objects().iter().map(|o| o.pose.dist).collect();

    RelationSet {
        rot_obj: boxes.iter().map(|a| boxes.iter().map(|b| rot(a, b)).collect()).collect(),
        rot_wall: boxes.iter().map(|a| walls.iter().map(|w| rot(a, w)).collect()).collect(),
        attach_obj: (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| Label::certain(i != j && contact_test(&boxes[i], &boxes[j], tolerance)))
                    .collect()
            })
            .collect(),
        attach_wall: boxes
            .iter()
            .map(|b| walls.iter().map(|w| Label::certain(contact_test(b, w, tolerance))).collect())
            .collect(),
        attach_floor: boxes
            .iter()
            .map(|b| Label::certain((b.bottom() - layout.floor_y).abs() <= tolerance))
            .collect(),
        attach_ceiling: boxes
            .iter()
            .map(|b| Label::certain((b.top() - layout.ceiling_y).abs() <= tolerance))
            .collect(),
        in_room: boxes
            .iter()
            .map(|b| {
                let inside = b.footprint().iter().all(|&p| layout.contains_xz(p));
                if inside {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
        farther: (0..n)
            .map(|i| (0..n).map(|j| Label::certain(dists[i] > dists[j])).collect())
            .collect(),
    }
}

/// Simulates an imperfect relation predictor.
///
/// Booleans flip independently with `flip_prob` (symmetric pairs flip
/// together so the set stays consistent), rotation bins shift uniformly by up
/// to `angle_noise_bins` (antisymmetric pairs shift together) and in-room
/// likelihoods invert with `flip_prob`. Boolean confidences become `1 - flip_prob`.
pub fn corrupt_relations(r: &RelationSet, flip_prob: f64, angle_noise_bins: u8, seed: u64) -> Result<RelationSet> {
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::Config(format!("flip probability {flip_prob} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conf = 1.0 - flip_prob;
    let mut out = r.clone();
    let n = r.object_count();
    let k = angle_noise_bins as i64;

    let flip = |l: Label, rng: &mut ChaCha8Rng| Label {
        value: if rng.random_bool(flip_prob) { !l.value } else { l.value },
        confidence: conf,
    };
    let shift = |rng: &mut ChaCha8Rng| if k == 0 { 0 } else { rng.random_range(-k..=k) };
    let shifted = |l: RotLabel, s: i64| RotLabel {
        bin: (l.bin as i64 + s).rem_euclid(ROTATION_BINS as i64) as u8,
        confidence: l.confidence,
    };

    for i in 0..n {
        for j in i + 1..n {
            let a = flip(r.attach_obj[i][j], &mut rng);
            out.attach_obj[i][j] = a;
            out.attach_obj[j][i] = a;
            let f = flip(r.farther[i][j], &mut rng);
            out.farther[i][j] = f;
            out.farther[j][i] = Label {
                value: if f.value != r.farther[i][j].value { !r.farther[j][i].value } else { r.farther[j][i].value },
                confidence: conf,
            };
            let s = shift(&mut rng);
            out.rot_obj[i][j] = shifted(r.rot_obj[i][j], s);
            out.rot_obj[j][i] = shifted(r.rot_obj[j][i], -s);
        }
        for w in 0..r.attach_wall[i].len() {
            out.attach_wall[i][w] = flip(r.attach_wall[i][w], &mut rng);
            let s = shift(&mut rng);
            out.rot_wall[i][w] = shifted(r.rot_wall[i][w], s);
        }
        out.attach_floor[i] = flip(r.attach_floor[i], &mut rng);
        out.attach_ceiling[i] = flip(r.attach_ceiling[i], &mut rng);
        if rng.random_bool(flip_prob) {
            out.in_room[i] = 1.0 - r.in_room[i];
        }
        out.attach_obj[i][i].confidence = conf;
        out.farther[i][i].confidence = conf;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectFeatures {
    /// Corner height above the floor plane, in corner order.
    pub floor_height: [f64; 8],
    /// Ceiling height above each corner.
    pub ceiling_height: [f64; 8],
    /// Signed 2-D distance from each corner to the floor polygon, negative inside.
    pub polygon_distance: [f64; 8],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairTarget {
    Object(usize),
    Wall(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub from: usize,
    pub to: PairTarget,
    /// `yaw_to - yaw_from`, wrapped to `[-π, π)`.
    pub relative_rotation: f64,
    /// Signed gap along each separating axis.
    pub separation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeomFeatures {
    pub objects: Vec<ObjectFeatures>,
    pub pairs: Vec<PairFeatures>,
}

/// Geometric inputs a relation predictor would consume.
pub fn geometric_features(scene: &Scene) -> GeomFeatures {
    let layout = scene.layout();
    let boxes = scene.boxes();
    let objects = boxes
        .iter()
        .map(|b| {
            let c = b.corners();
            ObjectFeatures {
                floor_height: c.map(|p| p.y - layout.floor_y),
                ceiling_height: c.map(|p| layout.ceiling_y - p.y),
                polygon_distance: c.map(|p| polygon::signed_distance(&layout.floor_polygon, [p.x, p.z])),
            }
        })
        .collect();
    let pair = |i: usize, a: &OrientedBox, to: PairTarget, b: &OrientedBox| PairFeatures {
        from: i,
        to,
        relative_rotation: wrap_angle(b.yaw - a.yaw),
        separation: sat_profile(a, b, AxisMode::Deduplicated).gaps,
    };
    let mut pairs = Vec::new();
    for (i, a) in boxes.iter().enumerate() {
        for (j, b) in boxes.iter().enumerate() {
            if i != j {
                pairs.push(pair(i, a, PairTarget::Object(j), b));
            }
        }
        for (w, b) in scene.walls().iter().enumerate() {
            pairs.push(pair(i, a, PairTarget::Wall(w), b));
        }
    }
    GeomFeatures { objects, pairs }
}
