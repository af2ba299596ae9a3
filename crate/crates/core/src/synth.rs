//! Procedural ground-truth rooms and pose noise.
//!
//! Rooms are Manhattan rectangles or L-shapes. Furniture rests on the floor
//! with yaws on the room axes, either flush against a wall, side by side with
//! an earlier piece, or free standing. Any two boxes (and any box and wall)
//! either touch, with a clearance of [`CONTACT_CLEARANCE`], or stay more than
//! [`SEPARATION_MARGIN`] apart, so relation extraction at the default contact
//! tolerance sees exactly the constructed contacts.

use std::f64::consts::FRAC_PI_2;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::collision::{sat_profile, AxisMode};
use crate::error::{Error, Result};
use crate::math::{wrap_angle, Vec3};
use crate::pano::bfov_of_box;
use crate::polygon;
use crate::relations::{extract_relations, RelationSet, DEFAULT_CONTACT_TOLERANCE};
use crate::scene::{
    box_to_pose, walls_from_layout, CameraFrame, LayoutShell, ObjectInstance, OrientedBox, Scene,
    DEFAULT_CAMERA_HEIGHT,
};

/// Gap left between touching surfaces so rounding never turns contact into overlap.
pub const CONTACT_CLEARANCE: f64 = 1e-7;
/// Minimum gap between surfaces that are not in contact.
pub const SEPARATION_MARGIN: f64 = 0.15;
pub const GRID_CELL: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoomShape {
    Rectangle,
    LShape,
    /// Rectangle or L-shape with equal probability.
    #[default]
    Any,
}

/// Synthetic size prior for one category, in meters (width, height, depth).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryPrior {
    pub id: u32,
    pub name: String,
    pub size: [f64; 3],
    /// Relative uniform jitter applied to each extent.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_jitter() -> f64 {
    0.15
}

fn default_weight() -> f64 {
    1.0
}

fn prior(id: u32, name: &str, size: [f64; 3]) -> CategoryPrior {
    CategoryPrior {
        id,
        name: name.into(),
        size,
        jitter: default_jitter(),
        weight: default_weight(),
    }
}

/// Invented furniture sizes; not measured from any dataset.
pub fn default_categories() -> Vec<CategoryPrior> {
    vec![
        prior(0, "bed", [1.6, 0.55, 2.0]),
        prior(1, "wardrobe", [1.2, 2.0, 0.6]),
        prior(2, "desk", [1.2, 0.75, 0.6]),
        prior(3, "chair", [0.5, 0.9, 0.5]),
        prior(4, "sofa", [2.0, 0.85, 0.9]),
        prior(5, "table", [1.0, 0.75, 1.0]),
        prior(6, "nightstand", [0.45, 0.55, 0.4]),
        prior(7, "bookshelf", [0.9, 1.8, 0.35]),
        prior(8, "tv_stand", [1.5, 0.5, 0.45]),
        prior(9, "cabinet", [0.8, 0.9, 0.5]),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma_center: f64,
    pub sigma_yaw: f64,
    /// Standard deviation of the log-size change.
    pub sigma_size: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_center: 0.3,
            sigma_yaw: 15f64.to_radians(),
            sigma_size: 0.1,
        }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            sigma_center: 0.0,
            sigma_yaw: 0.0,
            sigma_size: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_center", self.sigma_center),
            ("sigma_yaw", self.sigma_yaw),
            ("sigma_size", self.sigma_size),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub seed: u64,
    pub room_width: [f64; 2],
    pub room_depth: [f64; 2],
    pub room_height: [f64; 2],
    pub room_shape: RoomShape,
    pub object_count: [usize; 2],
    pub categories: Vec<CategoryPrior>,
    pub wall_attach_prob: f64,
    pub adjacency_prob: f64,
    pub noise: NoiseSpec,
    pub camera_height: f64,
    pub camera_clearance: f64,
    pub max_attempts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            room_width: [4.5, 7.5],
            room_depth: [4.5, 7.5],
            room_height: [2.6, 3.2],
            room_shape: RoomShape::Any,
            object_count: [5, 10],
            categories: default_categories(),
            wall_attach_prob: 0.5,
            adjacency_prob: 0.3,
            noise: NoiseSpec::default(),
            camera_height: DEFAULT_CAMERA_HEIGHT,
            camera_clearance: 0.5,
            max_attempts: 1000,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, r: [f64; 2]| {
            if r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} range {r:?} must be positive and ordered")))
            }
        };
        range("room_width", self.room_width)?;
        range("room_depth", self.room_depth)?;
        range("room_height", self.room_height)?;
        if self.object_count[0] > self.object_count[1] {
            return Err(Error::Config(format!("object_count range {:?} is not ordered", self.object_count)));
        }
        for (name, p) in [("wall_attach_prob", self.wall_attach_prob), ("adjacency_prob", self.adjacency_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0, 1]")));
            }
        }
        if self.categories.is_empty() && self.object_count[1] > 0 {
            return Err(Error::Config("no categories to draw objects from".into()));
        }
        for c in &self.categories {
            if c.size.iter().any(|s| !(*s > 0.0 && s.is_finite())) || !(0.0..1.0).contains(&c.jitter) || !(c.weight >= 0.0) {
                return Err(Error::Config(format!("invalid prior for category `{}`", c.name)));
            }
            let tallest = c.size[1] * (1.0 + c.jitter);
            if tallest + SEPARATION_MARGIN >= self.room_height[0] {
                return Err(Error::Config(format!("category `{}` is too tall for the room height range", c.name)));
            }
        }
        if !self.categories.is_empty() && self.categories.iter().all(|c| c.weight == 0.0) {
            return Err(Error::Config("category weights are all zero".into()));
        }
        if !(self.camera_height > 0.0 && self.camera_height < self.room_height[0]) {
            return Err(Error::Config("camera height must lie between floor and ceiling".into()));
        }
        if !(self.camera_clearance >= 0.0) || self.max_attempts == 0 {
            return Err(Error::Config("camera clearance must be non-negative and max_attempts positive".into()));
        }
        self.noise.validate()
    }
}

fn sample_layout(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let w = rng.random_range(cfg.room_width[0]..=cfg.room_width[1]);
    let d = rng.random_range(cfg.room_depth[0]..=cfg.room_depth[1]);
    let l_shape = match cfg.room_shape {
        RoomShape::Rectangle => false,
        RoomShape::LShape => true,
        RoomShape::Any => rng.random_bool(0.5),
    };
    if !l_shape {
        return vec![[0.0, 0.0], [w, 0.0], [w, d], [0.0, d]];
    }
    // remove the (+x, +z) corner
    let nw = w * rng.random_range(0.25..=0.45);
    let nd = d * rng.random_range(0.25..=0.45);
    vec![[0.0, 0.0], [w, 0.0], [w, d - nd], [w - nw, d - nd], [w - nw, d], [0.0, d]]
}

/// Yaw whose local `+z` points along the horizontal direction `(nx, nz)`.
fn yaw_facing(nx: f64, nz: f64) -> f64 {
    wrap_angle(nx.atan2(nz))
}

fn manhattan_yaw(k: usize) -> f64 {
    wrap_angle(k as f64 * FRAC_PI_2)
}

struct Placer<'a> {
    cfg: &'a GenConfig,
    poly: Vec<[f64; 2]>,
    floor_y: f64,
    ceiling_y: f64,
    walls: Vec<OrientedBox>,
    boxes: Vec<OrientedBox>,
}

impl Placer<'_> {
    fn sample_size(&self, prior: &CategoryPrior, rng: &mut ChaCha8Rng) -> [f64; 3] {
        prior.size.map(|s| s * (1.0 + rng.random_range(-prior.jitter..=prior.jitter)))
    }

    fn grounded(&self, x: f64, z: f64, size: [f64; 3], yaw: f64) -> OrientedBox {
        OrientedBox::new(
            Vec3::new(x, self.floor_y + 0.5 * size[1] + CONTACT_CLEARANCE, z),
            Vec3::from(size),
            yaw,
        )
    }

    fn against_wall(&self, size: [f64; 3], rng: &mut ChaCha8Rng) -> Option<OrientedBox> {
        let n = self.poly.len();
        let e = rng.random_range(0..n);
        let (a, b) = (self.poly[e], self.poly[(e + 1) % n]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        if len < size[0] {
            return None;
        }
        let t = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        let inward = [-t[1], t[0]];
        let s = rng.random_range(0.5 * size[0]..=len - 0.5 * size[0]);
        let off = 0.5 * size[2] + CONTACT_CLEARANCE;
        let x = a[0] + t[0] * s + inward[0] * off;
        let z = a[1] + t[1] * s + inward[1] * off;
        Some(self.grounded(x, z, size, yaw_facing(inward[0], inward[1])))
    }

    fn beside(&self, size: [f64; 3], rng: &mut ChaCha8Rng) -> Option<OrientedBox> {
        let other = *self.boxes.choose(rng)?;
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (ax, az) = (other.axis_x(), other.axis_z());
        let along = side * (0.5 * other.size.x + 0.5 * size[0] + CONTACT_CLEARANCE);
        // align the back faces
        let back = 0.5 * (size[2] - other.size.z);
        let x = other.center.x + ax.x * along + az.x * back;
        let z = other.center.z + ax.z * along + az.z * back;
        Some(self.grounded(x, z, size, other.yaw))
    }

    fn free(&self, size: [f64; 3], rng: &mut ChaCha8Rng) -> OrientedBox {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &self.poly {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let x = rng.random_range(lo[0]..=hi[0]);
        let z = rng.random_range(lo[1]..=hi[1]);
        self.grounded(x, z, size, manhattan_yaw(rng.random_range(0..4)))
    }

    /// Touching (separation within the attachment threshold) or clearly apart.
    fn compatible(&self, a: &OrientedBox, b: &OrientedBox) -> bool {
        let p = sat_profile(a, b, AxisMode::Deduplicated);
        if p.colliding {
            return false;
        }
        let widest = p.gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        p.separation() <= crate::energy::ATTACH_EPS || widest > SEPARATION_MARGIN
    }

    fn acceptable(&self, b: &OrientedBox) -> bool {
        b.footprint().iter().all(|&p| polygon::contains(&self.poly, p))
            && b.top() < self.ceiling_y - SEPARATION_MARGIN
            && self.walls.iter().chain(&self.boxes).all(|o| self.compatible(b, o))
    }
}

fn pick_category<'a>(cats: &'a [CategoryPrior], rng: &mut ChaCha8Rng) -> &'a CategoryPrior {
    cats.choose_weighted(rng, |c| c.weight).expect("validated category weights")
}

/// Camera cell centers inside the room whose distance to every wall and
/// object footprint is at least the configured clearance.
fn camera_cells(poly: &[[f64; 2]], boxes: &[OrientedBox], clearance: f64) -> Vec<[f64; 2]> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in poly {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let footprints: Vec<[[f64; 2]; 4]> = boxes.iter().map(|b| b.footprint()).collect();
    let nx = ((hi[0] - lo[0]) / GRID_CELL).floor() as usize;
    let nz = ((hi[1] - lo[1]) / GRID_CELL).floor() as usize;
    let mut cells = Vec::new();
    for i in 0..nx {
        for j in 0..nz {
            let p = [lo[0] + (i as f64 + 0.5) * GRID_CELL, lo[1] + (j as f64 + 0.5) * GRID_CELL];
            if polygon::signed_distance(poly, p) > -clearance {
                continue;
            }
            if footprints.iter().all(|f| polygon::signed_distance(f, p) >= clearance) {
                cells.push(p);
            }
        }
    }
    cells
}

/// A generated room with its ground-truth relations.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub scene: Scene,
    pub relations: RelationSet,
}

/// Builds a ground-truth scene: detections match the boxes and every
/// initial pose equals the true pose.
pub fn generate_scene(cfg: &GenConfig) -> Result<Generated> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let floor_room = 0.0;
    let mut last_err = None;
    // a room that cannot be furnished or has no camera position is redrawn
    'room: for _ in 0..32 {
        let poly = sample_layout(cfg, &mut rng);
        let height = rng.random_range(cfg.room_height[0]..=cfg.room_height[1]);
        let shell = LayoutShell {
            floor_polygon: poly.clone(),
            floor_y: floor_room,
            ceiling_y: floor_room + height,
            wall_thickness: crate::scene::DEFAULT_WALL_THICKNESS,
        };
        let mut placer = Placer {
            cfg,
            walls: walls_from_layout(&shell)?,
            poly,
            floor_y: floor_room,
            ceiling_y: floor_room + height,
            boxes: Vec::new(),
        };
        let count = rng.random_range(cfg.object_count[0]..=cfg.object_count[1]);
        let mut categories = Vec::with_capacity(count);
        for _ in 0..count {
            let prior = pick_category(&cfg.categories, &mut rng);
            let mut placed = None;
            for _ in 0..placer.cfg.max_attempts {
                let size = placer.sample_size(prior, &mut rng);
                let u: f64 = rng.random();
                let candidate = if u < cfg.wall_attach_prob {
                    placer.against_wall(size, &mut rng)
                } else if u < cfg.wall_attach_prob + (1.0 - cfg.wall_attach_prob) * cfg.adjacency_prob {
                    placer.beside(size, &mut rng)
                } else {
                    Some(placer.free(size, &mut rng))
                };
                if let Some(b) = candidate.filter(|b| placer.acceptable(b)) {
                    placed = Some(b);
                    break;
                }
            }
            let Some(b) = placed else {
                last_err = Some(Error::Placement {
                    attempts: cfg.max_attempts,
                });
                continue 'room;
            };
            placer.boxes.push(b);
            categories.push(prior.id);
        }

        let cells = camera_cells(&placer.poly, &placer.boxes, cfg.camera_clearance);
        let Some(&cam) = cells.choose(&mut rng) else {
            last_err = Some(Error::Placement {
                attempts: cfg.max_attempts,
            });
            continue;
        };
        match assemble(cfg, &placer, &categories, cam, height) {
            Ok(g) => return Ok(g),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or(Error::Placement {
        attempts: cfg.max_attempts,
    }))
}

fn assemble(cfg: &GenConfig, placer: &Placer, categories: &[u32], cam: [f64; 2], height: f64) -> Result<Generated> {
    let floor_y = -cfg.camera_height;
    let shift = Vec3::new(-cam[0], floor_y - placer.floor_y, -cam[1]);
    let layout = LayoutShell {
        floor_polygon: placer.poly.iter().map(|p| [p[0] - cam[0], p[1] - cam[1]]).collect(),
        floor_y,
        ceiling_y: floor_y + height,
        wall_thickness: crate::scene::DEFAULT_WALL_THICKNESS,
    };
    let mut objects = Vec::with_capacity(placer.boxes.len());
    for (k, (b, &cat)) in placer.boxes.iter().zip(categories).enumerate() {
        let b = OrientedBox {
            center: b.center + shift,
            ..*b
        };
        let det = bfov_of_box(&b, 1.0, cat).map_err(|_| Error::Placement {
            attempts: cfg.max_attempts,
        })?;
        let pose = box_to_pose(&b, det.center);
        objects.push(ObjectInstance::new(k as u32, cat, det, pose, 1.0));
    }
    let scene = Scene::new(CameraFrame { height_above_floor: cfg.camera_height }, layout, objects)?;
    let relations = extract_relations(&scene, DEFAULT_CONTACT_TOLERANCE);
    Ok(Generated { scene, relations })
}

/// Adds Gaussian noise to every object's world-space center, yaw and log-size.
///
/// The noisy box becomes both the current and the initial pose. Its detection
/// is recomputed from the noisy box unless `keep_detections` is set, in
/// which case the original detection stays and the pose is re-encoded
/// against it.
pub fn perturb_scene(scene: &Scene, noise: &NoiseSpec, seed: u64, keep_detections: bool) -> Result<Scene> {
    noise.validate()?;
    if *noise == NoiseSpec::zero() {
        return Ok(scene.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut objects = Vec::with_capacity(scene.objects().len());
    for o in scene.objects() {
        let b = o.oriented_box();
        let mut noisy = None;
        for _ in 0..100 {
            let mut g = || unit.sample(&mut rng);
            let center = b.center + Vec3::new(g(), g(), g()) * noise.sigma_center;
            let yaw = wrap_angle(b.yaw + g() * noise.sigma_yaw);
            let size = Vec3::new(
                b.size.x * (g() * noise.sigma_size).exp(),
                b.size.y * (g() * noise.sigma_size).exp(),
                b.size.z * (g() * noise.sigma_size).exp(),
            );
            let candidate = OrientedBox::new(center, size, yaw);
            let det = if keep_detections {
                Ok(o.detection)
            } else {
                bfov_of_box(&candidate, o.detection.score, o.category)
            };
            if let Ok(det) = det {
                if center.norm() > 1e-3 {
                    noisy = Some((candidate, det));
                    break;
                }
            }
        }
        // every draw put the box behind its own tangent plane: leave it unperturbed
        let (nb, det) = noisy.unwrap_or((b, o.detection));
        let pose = box_to_pose(&nb, det.center);
        objects.push(ObjectInstance::new(o.id, o.category, det, pose, o.in_room_likelihood));
    }
    scene.with_objects(objects)
}

/// Yaw distance on the circle.
pub fn yaw_error(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Mean center distance and mean yaw error between matching objects.
pub fn pose_errors(a: &Scene, b: &Scene) -> (f64, f64) {
    let n = a.objects().len().max(1) as f64;
    let (mut dc, mut dy) = (0.0, 0.0);
    for (x, y) in a.boxes().iter().zip(b.boxes()) {
        dc += (x.center - y.center).norm();
        dy += yaw_error(x.yaw, y.yaw);
    }
    (dc / n, dy / n)
}
