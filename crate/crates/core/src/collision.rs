//! Separating-axis collision measures between yaw-only boxes and against the
//! room shell.
//!
//! For two yaw-only cuboids the candidate separating axes are the face
//! normals: `y`, plus the two horizontal normals of each box. Edge-edge
//! cross products add nothing here. Each box has vertical edges and
//! horizontal edges; the cross product of two horizontal edges is `y`, and the
//! cross product of a vertical edge with a horizontal edge is horizontal and
//! perpendicular to that edge, which is a face normal of the edge's box.
//! So the face normals alone decide intersection exactly.

use crate::math::Vec3;
use crate::polygon;
use crate::scalar::Real;
use crate::scene::{LayoutShell, OrientedBox};

/// Horizontal axes whose cross product is below this are treated as parallel.
pub const AXIS_DEDUP_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AxisMode {
    /// Distinct face normals up to sign (3 or 5 axes).
    #[default]
    Deduplicated,
    /// All six face normals of both boxes, shared ones counted twice.
    AllFaceNormals,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationProfile<T = f64> {
    pub axes: Vec<Vec3<T>>,
    /// Positive when the projections are apart, negative by the overlap depth otherwise.
    pub gaps: Vec<T>,
    pub colliding: bool,
}

impl<T: Real> SeparationProfile<T> {
    /// Sum of per-axis overlaps when colliding, else zero.
    pub fn collision_energy(&self) -> T {
        if !self.colliding {
            return T::zero();
        }
        self.gaps.iter().fold(T::zero(), |acc, &g| acc - g)
    }

    /// Sum of positive per-axis gaps when apart, else zero.
    pub fn separation(&self) -> T {
        if self.colliding {
            return T::zero();
        }
        self.gaps.iter().fold(T::zero(), |acc, &g| acc + g.pos())
    }

    pub fn min_abs_gap(&self) -> f64 {
        self.gaps.iter().map(|g| g.value().abs()).fold(f64::INFINITY, f64::min)
    }
}

fn projection<T: Real>(b: &OrientedBox<T>, axis: Vec3<T>) -> (T, T) {
    let h = b.half();
    let radius = h.x * axis.dot(b.axis_x()).abs() + h.y * axis.y.abs() + h.z * axis.dot(b.axis_z()).abs();
    let c = b.center.dot(axis);
    (c - radius, c + radius)
}

pub(crate) fn order_key(b: &OrientedBox<impl Real>) -> [f64; 7] {
    let v = b.value();
    [v.yaw, v.center.x, v.center.y, v.center.z, v.size.x, v.size.y, v.size.z]
}

/// Per-axis separation of two boxes. The result does not depend on argument order.
pub fn sat_profile<T: Real>(a: &OrientedBox<T>, b: &OrientedBox<T>, mode: AxisMode) -> SeparationProfile<T> {
    let swap = order_key(b)
        .iter()
        .zip(order_key(a).iter())
        .find(|(x, y)| x != y)
        .is_some_and(|(x, y)| x < y);
    let (a, b) = if swap { (b, a) } else { (a, b) };

    let up = Vec3::new(T::zero(), T::cst(1.0), T::zero());
    let (ax, az, bx, bz) = (a.axis_x(), a.axis_z(), b.axis_x(), b.axis_z());
    let mut axes = Vec::with_capacity(6);
    match mode {
        AxisMode::Deduplicated => {
            axes.extend([ax, up, az]);
            // bx is parallel to ax or az exactly when the yaws differ by a multiple of 90°
            let sin_dx = (ax.x * bx.z - ax.z * bx.x).value().abs();
            let sin_dz = (az.x * bx.z - az.z * bx.x).value().abs();
            if sin_dx > AXIS_DEDUP_TOL && sin_dz > AXIS_DEDUP_TOL {
                axes.extend([bx, bz]);
            }
        }
        AxisMode::AllFaceNormals => axes.extend([ax, up, az, bx, up, bz]),
    }
    let gaps: Vec<T> = axes
        .iter()
        .map(|&n| {
            let (alo, ahi) = projection(a, n);
            let (blo, bhi) = projection(b, n);
            (blo - ahi).max(alo - bhi)
        })
        .collect();
    let colliding = gaps.iter().all(|g| g.value() < 0.0);
    SeparationProfile { axes, gaps, colliding }
}

/// Object-object collision energy: summed overlaps when the boxes intersect.
pub fn collision_energy_pair<T: Real>(a: &OrientedBox<T>, b: &OrientedBox<T>, mode: AxisMode) -> T {
    sat_profile(a, b, mode).collision_energy()
}

pub fn intersects(a: &OrientedBox, b: &OrientedBox) -> bool {
    sat_profile(a, b, AxisMode::Deduplicated).colliding
}

/// Sum over corners outside the floor polygon of their distance to it.
pub fn wall_collision<T: Real>(b: &OrientedBox<T>, layout: &LayoutShell) -> T {
    let poly = &layout.floor_polygon;
    b.footprint()
        .into_iter()
        .filter(|p| !polygon::contains(poly, [p[0].value(), p[1].value()]))
        // lower and upper corners share a footprint point
        .map(|p| polygon::boundary_distance_of(poly, p) * 2.0)
        .fold(T::zero(), |acc, d| acc + d)
}

/// Penetration of the bottom face below the floor and the top face above the ceiling.
pub fn floor_ceiling_collision<T: Real>(b: &OrientedBox<T>, layout: &LayoutShell) -> (T, T) {
    let fc = (T::cst(layout.floor_y) - b.bottom()).pos();
    let cc = (b.top() - layout.ceiling_y).pos();
    (fc, cc)
}

/// Contact within `tolerance`: both boxes grown by `tolerance / 2` per side must intersect.
pub fn contact_test(a: &OrientedBox, b: &OrientedBox, tolerance: f64) -> bool {
    let m = 0.5 * tolerance;
    intersects(&a.inflated(m), &b.inflated(m))
}
