//! Scene data model and coordinate conventions.
//!
//! World frame: the camera sits at the origin, `+y` points up and the floor
//! is the plane `y = -height_above_floor`. Objects rotate about `y` only.
//! A yaw of `ψ` maps the box's local `+x` to `(cos ψ, 0, -sin ψ)` and its
//! local `+z` (the front face) to `(sin ψ, 0, cos ψ)`, so yaw grows
//! counter-clockwise when looking down the `+y` axis onto the `(z, x)` plane
//! and a box with yaw equal to a viewing longitude faces away from the camera.
//!
//! Viewing directions use `dir(lon, lat) = (cos lat sin lon, sin lat, cos lat cos lon)`.

use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{wrap_angle, Vec3};
use crate::polygon;
use crate::scalar::Real;

pub const DEFAULT_CAMERA_HEIGHT: f64 = 1.6;
pub const DEFAULT_WALL_THICKNESS: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraFrame {
    pub height_above_floor: f64,
}

impl Default for CameraFrame {
    fn default() -> Self {
        Self {
            height_above_floor: DEFAULT_CAMERA_HEIGHT,
        }
    }
}

impl CameraFrame {
    pub fn floor_y(&self) -> f64 {
        -self.height_above_floor
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalDir {
    pub lon: f64,
    pub lat: f64,
}

impl SphericalDir {
    pub fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }
}

/// Unit viewing direction for a longitude/latitude pair.
pub fn direction<T: Real>(lon: T, lat: T) -> Vec3<T> {
    let cl = lat.cos();
    Vec3::new(cl * lon.sin(), lat.sin(), cl * lon.cos())
}

/// Bounding field of view: a detection box on the panorama.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BFoV {
    pub center: SphericalDir,
    pub hfov: f64,
    pub vfov: f64,
    pub score: f64,
    pub category: u32,
}

impl BFoV {
    pub fn validate(&self) -> Result<()> {
        let ok = self.hfov > 0.0
            && self.hfov < 2.0 * PI
            && self.vfov > 0.0
            && self.vfov < PI
            && (0.0..=1.0).contains(&self.score)
            && self.center.lon.is_finite()
            && self.center.lat.abs() <= FRAC_PI_2;
        if ok {
            Ok(())
        } else {
            Err(Error::Scene(format!("invalid BFoV {self:?}")))
        }
    }
}

/// Optimized per-object variables.
///
/// Flattened parameter order is `Δlon, Δlat, dist, sx, sy, sz, θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Clone", deserialize = "T: Deserialize<'de>"))]
pub struct PoseParams<T = f64> {
    /// Angular offset from the detection center to the projected box center.
    pub delta: [T; 2],
    /// Camera-to-center distance.
    pub dist: T,
    /// Full extents along the local axes.
    pub size: Vec3<T>,
    /// Yaw in the perspective view cropped around the detection.
    pub theta: T,
}

pub const PARAMS_PER_OBJECT: usize = 7;

impl<T: Real> PoseParams<T> {
    pub fn from_array(p: [T; PARAMS_PER_OBJECT]) -> Self {
        Self {
            delta: [p[0], p[1]],
            dist: p[2],
            size: Vec3::new(p[3], p[4], p[5]),
            theta: p[6],
        }
    }

    pub fn to_array(&self) -> [T; PARAMS_PER_OBJECT] {
        [
            self.delta[0],
            self.delta[1],
            self.dist,
            self.size.x,
            self.size.y,
            self.size.z,
            self.theta,
        ]
    }
}

impl PoseParams<f64> {
    pub fn validate(&self) -> Result<()> {
        let finite = self.to_array().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Scene("pose has non-finite parameters".into()));
        }
        if self.dist <= 0.0 {
            return Err(Error::Scene(format!("pose distance {} must be positive", self.dist)));
        }
        if self.size.as_array().iter().any(|&s| s <= 0.0) {
            return Err(Error::Scene(format!("pose size {:?} must be positive", self.size)));
        }
        Ok(())
    }
}

/// Yaw-only cuboid in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Clone", deserialize = "T: Deserialize<'de>"))]
pub struct OrientedBox<T = f64> {
    pub center: Vec3<T>,
    pub size: Vec3<T>,
    pub yaw: T,
}

impl<T: Real> OrientedBox<T> {
    pub fn new(center: Vec3<T>, size: Vec3<T>, yaw: T) -> Self {
        Self { center, size, yaw }
    }

    pub fn half(&self) -> Vec3<T> {
        self.size * 0.5
    }

    /// World direction of local `+x`.
    pub fn axis_x(&self) -> Vec3<T> {
        Vec3::new(self.yaw.cos(), T::zero(), -self.yaw.sin())
    }

    /// World direction of local `+z` (front face normal).
    pub fn axis_z(&self) -> Vec3<T> {
        Vec3::new(self.yaw.sin(), T::zero(), self.yaw.cos())
    }

    pub fn bottom(&self) -> T {
        self.center.y - self.size.y * 0.5
    }

    pub fn top(&self) -> T {
        self.center.y + self.size.y * 0.5
    }

    pub fn local_to_world(&self, local: Vec3<T>) -> Vec3<T> {
        let (ax, az) = (self.axis_x(), self.axis_z());
        Vec3::new(
            self.center.x + ax.x * local.x + az.x * local.z,
            self.center.y + local.y,
            self.center.z + ax.z * local.x + az.z * local.z,
        )
    }

    /// Corners in a fixed order: the lower face then the upper face, each
    /// counter-clockwise in local `(x, z)` starting from `(-x, -z)`.
    pub fn corners(&self) -> [Vec3<T>; 8] {
        let h = self.half();
        const SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
        std::array::from_fn(|k| {
            let (sx, sz) = SIGNS[k % 4];
            let sy = if k < 4 { -1.0 } else { 1.0 };
            self.local_to_world(Vec3::new(h.x * sx, h.y * sy, h.z * sz))
        })
    }

    /// Footprint corners `(x, z)`, counter-clockwise.
    pub fn footprint(&self) -> [[T; 2]; 4] {
        let c = self.corners();
        std::array::from_fn(|k| [c[k].x, c[k].z])
    }

    /// Grows every half-extent by `margin` (shrinks for negative margins).
    pub fn inflated(&self, margin: f64) -> Self {
        let size = self.size.map(|s| {
            let grown = s + 2.0 * margin;
            if grown.value() > 0.0 {
                grown
            } else {
                T::cst(1e-9)
            }
        });
        Self { size, ..*self }
    }

    pub fn value(&self) -> OrientedBox<f64> {
        OrientedBox {
            center: self.center.value(),
            size: self.size.value(),
            yaw: self.yaw.value(),
        }
    }
}

impl OrientedBox<f64> {
    pub fn lift<T: Real>(&self) -> OrientedBox<T> {
        OrientedBox {
            center: self.center.lift(),
            size: self.size.lift(),
            yaw: T::cst(self.yaw),
        }
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }

    /// Point coordinates in the box frame.
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        let d = p - self.center;
        Vec3::new(d.dot(self.axis_x()), d.y, d.dot(self.axis_z()))
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        let l = self.to_local(p);
        let h = self.half();
        l.x.abs() <= h.x && l.y.abs() <= h.y && l.z.abs() <= h.z
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.center.as_array().iter().chain(self.size.as_array().iter()).all(|v| v.is_finite())
            && self.yaw.is_finite();
        if !finite || self.size.as_array().iter().any(|&s| s <= 0.0) {
            return Err(Error::Scene(format!("invalid box {self:?}")));
        }
        Ok(())
    }
}

/// Maps pose parameters to the world box, given the detection center.
pub fn pose_to_box<T: Real>(pose: &PoseParams<T>, detection_center: SphericalDir) -> OrientedBox<T> {
    let lon = pose.delta[0] + detection_center.lon;
    let lat = pose.delta[1] + detection_center.lat;
    OrientedBox {
        center: direction(lon, lat).scale(pose.dist),
        size: pose.size,
        yaw: wrap_angle(pose.theta + lon),
    }
}

/// Inverse of [`pose_to_box`] for a fixed detection center.
pub fn box_to_pose(b: &OrientedBox, detection_center: SphericalDir) -> PoseParams {
    let c = b.center;
    let dist = c.norm();
    let lon = c.x.atan2(c.z);
    let lat = (c.y / dist).clamp(-1.0, 1.0).asin();
    PoseParams {
        delta: [wrap_angle(lon - detection_center.lon), lat - detection_center.lat],
        dist,
        size: b.size,
        theta: wrap_angle(b.yaw - lon),
    }
}

/// Manhattan room shell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutShell {
    /// Counter-clockwise `(x, z)` vertices; the closing edge is implicit.
    pub floor_polygon: Vec<[f64; 2]>,
    pub floor_y: f64,
    pub ceiling_y: f64,
    #[serde(default = "default_wall_thickness")]
    pub wall_thickness: f64,
}

fn default_wall_thickness() -> f64 {
    DEFAULT_WALL_THICKNESS
}

impl LayoutShell {
    pub fn rectangle(x0: f64, z0: f64, x1: f64, z1: f64, floor_y: f64, ceiling_y: f64) -> Self {
        Self {
            floor_polygon: vec![[x0, z0], [x1, z0], [x1, z1], [x0, z1]],
            floor_y,
            ceiling_y,
            wall_thickness: DEFAULT_WALL_THICKNESS,
        }
    }

    pub fn height(&self) -> f64 {
        self.ceiling_y - self.floor_y
    }

    pub fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.floor_polygon.len();
        (0..n).map(move |i| (self.floor_polygon[i], self.floor_polygon[(i + 1) % n]))
    }

    pub fn contains_xz(&self, p: [f64; 2]) -> bool {
        polygon::contains(&self.floor_polygon, p)
    }

    pub fn validate(&self) -> Result<()> {
        let poly = &self.floor_polygon;
        let n = poly.len();
        if n < 4 {
            return Err(Error::Layout(format!("polygon needs at least 4 vertices, got {n}")));
        }
        if poly.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Layout("non-finite vertex".into()));
        }
        if !(self.floor_y.is_finite() && self.ceiling_y.is_finite() && self.ceiling_y > self.floor_y) {
            return Err(Error::Layout(format!(
                "ceiling_y {} must exceed floor_y {}",
                self.ceiling_y, self.floor_y
            )));
        }
        if !(self.wall_thickness > 0.0 && self.wall_thickness.is_finite()) {
            return Err(Error::Layout("wall thickness must be positive".into()));
        }
        for (i, (a, b)) in self.edges().enumerate() {
            let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
            if dx == 0.0 && dz == 0.0 {
                return Err(Error::Layout(format!("edge {i} has zero length")));
            }
            if dx != 0.0 && dz != 0.0 {
                return Err(Error::Layout(format!("edge {i} is not axis-aligned")));
            }
        }
        if polygon::signed_area(poly) <= 0.0 {
            return Err(Error::Layout("polygon must be counter-clockwise".into()));
        }
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a, b) = (poly[i], poly[(i + 1) % n]);
                let (c, d) = (poly[j], poly[(j + 1) % n]);
                if polygon::segments_intersect(a, b, c, d) {
                    return Err(Error::Layout(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }
}

/// One wall cuboid per polygon edge, placed just outside the room.
///
/// Each wall spans its edge, runs floor to ceiling and is `wall_thickness`
/// deep. Its local `+x` follows the edge axis, so the yaw is `0` for edges
/// along `x` and `π/2` for edges along `z`.
pub fn walls_from_layout(layout: &LayoutShell) -> Result<Vec<OrientedBox>> {
    layout.validate()?;
    let t = layout.wall_thickness;
    let cy = 0.5 * (layout.floor_y + layout.ceiling_y);
    let h = layout.height();
    Ok(layout
        .edges()
        .map(|(a, b)| {
            let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dz);
            let outward = [dz / len, -dx / len];
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let yaw = if dz == 0.0 { 0.0 } else { FRAC_PI_2 };
            OrientedBox::new(
                Vec3::new(mid[0] + outward[0] * t * 0.5, cy, mid[1] + outward[1] * t * 0.5),
                Vec3::new(len, h, t),
                yaw,
            )
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: u32,
    pub category: u32,
    pub detection: BFoV,
    pub pose: PoseParams,
    initial_pose: PoseParams,
    pub in_room_likelihood: f64,
}

impl ObjectInstance {
    /// New object whose observation anchor is its current pose.
    pub fn new(id: u32, category: u32, detection: BFoV, pose: PoseParams, in_room_likelihood: f64) -> Self {
        Self::with_initial_pose(id, category, detection, pose, pose, in_room_likelihood)
    }

    pub fn with_initial_pose(
        id: u32,
        category: u32,
        detection: BFoV,
        pose: PoseParams,
        initial_pose: PoseParams,
        in_room_likelihood: f64,
    ) -> Self {
        Self {
            id,
            category,
            detection,
            pose,
            initial_pose,
            in_room_likelihood,
        }
    }

    pub fn initial_pose(&self) -> &PoseParams {
        &self.initial_pose
    }

    pub fn oriented_box(&self) -> OrientedBox {
        pose_to_box(&self.pose, self.detection.center)
    }

    pub fn validate(&self) -> Result<()> {
        self.pose.validate()?;
        self.initial_pose.validate()?;
        self.detection.validate()?;
        if !(0.0..=1.0).contains(&self.in_room_likelihood) {
            return Err(Error::Scene(format!(
                "object {}: in-room likelihood {} outside [0, 1]",
                self.id, self.in_room_likelihood
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    camera: CameraFrame,
    layout: LayoutShell,
    objects: Vec<ObjectInstance>,
    walls: Vec<OrientedBox>,
}

impl Scene {
    pub fn new(camera: CameraFrame, layout: LayoutShell, objects: Vec<ObjectInstance>) -> Result<Self> {
        if !(camera.height_above_floor > 0.0) {
            return Err(Error::Scene("camera height must be positive".into()));
        }
        if (layout.floor_y - camera.floor_y()).abs() > 1e-9 {
            return Err(Error::Scene(format!(
                "floor_y {} disagrees with camera height {}",
                layout.floor_y, camera.height_above_floor
            )));
        }
        let walls = walls_from_layout(&layout)?;
        let mut ids = HashSet::new();
        for o in &objects {
            o.validate()?;
            if !ids.insert(o.id) {
                return Err(Error::Scene(format!("duplicate object id {}", o.id)));
            }
        }
        Ok(Self {
            camera,
            layout,
            objects,
            walls,
        })
    }

    pub fn camera(&self) -> &CameraFrame {
        &self.camera
    }

    pub fn layout(&self) -> &LayoutShell {
        &self.layout
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn walls(&self) -> &[OrientedBox] {
        &self.walls
    }

    pub fn boxes(&self) -> Vec<OrientedBox> {
        self.objects.iter().map(ObjectInstance::oriented_box).collect()
    }

    pub fn poses(&self) -> Vec<PoseParams> {
        self.objects.iter().map(|o| o.pose).collect()
    }

    /// Same scene with every object's current pose replaced.
    pub fn with_poses(&self, poses: &[PoseParams]) -> Self {
        assert_eq!(poses.len(), self.objects.len(), "pose count mismatch");
        let mut next = self.clone();
        for (o, p) in next.objects.iter_mut().zip(poses) {
            o.pose = *p;
        }
        next
    }

    /// Same room with a different object list.
    pub fn with_objects(&self, objects: Vec<ObjectInstance>) -> Result<Self> {
        Self::new(self.camera, self.layout.clone(), objects)
    }
}
