//! Equirectangular panorama geometry: direction mapping, tangent-plane
//! projection of cuboids, BFoV overlap and cross-border merging.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::math::{wrap_angle, Vec3};
use crate::scalar::Real;
use crate::scene::{direction, OrientedBox, SphericalDir, BFoV};

pub const DEFAULT_NMS_IOU: f64 = 0.5;

/// Detections ending this close to `lon = ±π` are treated as cut by the seam.
pub const SEAM_EPS: f64 = 1e-3;

pub fn lonlat_to_dir(s: SphericalDir) -> Vec3 {
    direction(s.lon, s.lat)
}

/// Inverse of [`lonlat_to_dir`]. Longitude lands in `[-π, π)`; at the poles it is 0.
pub fn dir_to_lonlat(v: Vec3) -> Result<SphericalDir> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    let horizontal = v.x.hypot(v.z);
    let lat = v.y.atan2(horizontal);
    let lon = if horizontal <= 1e-15 * n { 0.0 } else { wrap_angle(v.x.atan2(v.z)) };
    Ok(SphericalDir { lon, lat })
}

/// Axis-aligned rectangle on the tangent plane at unit distance, in
/// perspective (tangent) coordinates: `u` to the right, `v` up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentBox2D<T = f64> {
    pub u: T,
    pub v: T,
    pub hu: T,
    pub hv: T,
}

/// Angular rectangle in `(lon, lat)` space, generic for differentiation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FovRect<T = f64> {
    pub lon: T,
    pub lat: T,
    pub hfov: T,
    pub vfov: T,
}

impl FovRect<f64> {
    pub fn of(b: &BFoV) -> Self {
        Self {
            lon: b.center.lon,
            lat: b.center.lat,
            hfov: b.hfov,
            vfov: b.vfov,
        }
    }

    pub fn lift<T: Real>(&self) -> FovRect<T> {
        FovRect {
            lon: T::cst(self.lon),
            lat: T::cst(self.lat),
            hfov: T::cst(self.hfov),
            vfov: T::cst(self.vfov),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BehindTangentPlane;

/// Orthonormal frame of the tangent plane touching the sphere at `forward`.
#[derive(Clone, Copy, Debug)]
pub struct TangentFrame<T> {
    pub forward: Vec3<T>,
    pub right: Vec3<T>,
    pub up: Vec3<T>,
}

impl<T: Real> TangentFrame<T> {
    /// Frame for a non-vertical direction `v`; `None` at the poles.
    pub fn toward(v: Vec3<T>) -> Option<Self> {
        let n = v.norm();
        let h = (v.x * v.x + v.z * v.z).sqrt();
        if !(h.value() > 1e-12 * n.value()) {
            return None;
        }
        let forward = v.scale(T::cst(1.0) / n);
        let right = Vec3::new(v.z / h, T::zero(), -(v.x / h));
        let up = forward.cross(right);
        Some(Self { forward, right, up })
    }

    pub fn at(lon: T, lat: T) -> Self {
        let forward = direction(lon, lat);
        let right = Vec3::new(lon.cos(), T::zero(), -lon.sin());
        let up = forward.cross(right);
        Self { forward, right, up }
    }
}

/// Perspective projection of the cuboid onto the tangent plane centered at
/// the cuboid-center direction, bounded by an axis-aligned rectangle.
///
/// Fails when some corner lies at or beyond 90° from the center direction.
pub fn project_box_to_tangent<T: Real>(b: &OrientedBox<T>) -> Result<(TangentFrame<T>, TangentBox2D<T>), BehindTangentPlane> {
    let frame = TangentFrame::toward(b.center).ok_or(BehindTangentPlane)?;
    let mut lo = [T::zero(); 2];
    let mut hi = [T::zero(); 2];
    for (k, c) in b.corners().into_iter().enumerate() {
        let depth = c.dot(frame.forward);
        if !(depth.value() > 0.0) {
            return Err(BehindTangentPlane);
        }
        let u = c.dot(frame.right) / depth;
        let v = c.dot(frame.up) / depth;
        if k == 0 {
            lo = [u, v];
            hi = [u, v];
        } else {
            lo = [lo[0].min(u), lo[1].min(v)];
            hi = [hi[0].max(u), hi[1].max(v)];
        }
    }
    let rect = TangentBox2D {
        u: (lo[0] + hi[0]) * 0.5,
        v: (lo[1] + hi[1]) * 0.5,
        hu: (hi[0] - lo[0]) * 0.5,
        hv: (hi[1] - lo[1]) * 0.5,
    };
    Ok((frame, rect))
}

/// Angular rectangle spanned by a tangent-plane rectangle.
pub fn fov_of_tangent_box<T: Real>(t: &TangentBox2D<T>, frame: &TangentFrame<T>) -> FovRect<T> {
    let p = frame.forward + frame.right.scale(t.u) + frame.up.scale(t.v);
    let h = (p.x * p.x + p.z * p.z).sqrt();
    FovRect {
        lon: p.x.atan2(p.z),
        lat: p.y.atan2(h),
        hfov: (t.u + t.hu).atan() - (t.u - t.hu).atan(),
        vfov: (t.v + t.hv).atan() - (t.v - t.hv).atan(),
    }
}

/// BFoV covering a tangent-plane rectangle measured around `center`.
pub fn bfov_of_tangent_box(t: &TangentBox2D, center: SphericalDir, score: f64, category: u32) -> BFoV {
    let frame = TangentFrame::at(center.lon, center.lat);
    let r = fov_of_tangent_box(t, &frame);
    BFoV {
        center: SphericalDir {
            lon: wrap_angle(r.lon),
            lat: r.lat,
        },
        hfov: r.hfov,
        vfov: r.vfov,
        score,
        category,
    }
}

/// Projected BFoV of a box, as observed from the camera.
pub fn projected_fov<T: Real>(b: &OrientedBox<T>) -> Result<FovRect<T>, BehindTangentPlane> {
    let (frame, rect) = project_box_to_tangent(b)?;
    Ok(fov_of_tangent_box(&rect, &frame))
}

pub fn bfov_of_box(b: &OrientedBox, score: f64, category: u32) -> Result<BFoV, BehindTangentPlane> {
    let r = projected_fov(b)?;
    Ok(BFoV {
        center: SphericalDir {
            lon: wrap_angle(r.lon),
            lat: r.lat,
        },
        hfov: r.hfov,
        vfov: r.vfov,
        score,
        category,
    })
}

fn interval_overlap<T: Real>(a_lo: T, a_hi: T, b_lo: T, b_hi: T) -> T {
    (a_hi.min(b_hi) - a_lo.max(b_lo)).pos()
}

/// IoU of two angular rectangles. Longitude overlap is measured on the
/// circle by testing the unwrapped alignments of `b` one turn apart.
pub fn fov_iou<T: Real>(a: &FovRect<T>, b: &FovRect<T>) -> T {
    let dl = wrap_angle(b.lon - a.lon);
    let (ah, bh) = (a.hfov * 0.5, b.hfov * 0.5);
    let mut lon_overlap = T::zero();
    for shift in [-TAU, 0.0, TAU] {
        let c = a.lon + dl + shift;
        lon_overlap += interval_overlap(a.lon - ah, a.lon + ah, c - bh, c + bh);
    }
    let lat_overlap = interval_overlap(
        a.lat - a.vfov * 0.5,
        a.lat + a.vfov * 0.5,
        b.lat - b.vfov * 0.5,
        b.lat + b.vfov * 0.5,
    );
    let inter = lon_overlap * lat_overlap;
    let union = a.hfov * a.vfov + b.hfov * b.vfov - inter;
    if union.value() > 0.0 {
        inter / union
    } else {
        T::zero()
    }
}

pub fn bfov_iou(a: &BFoV, b: &BFoV) -> f64 {
    fov_iou(&FovRect::of(a), &FovRect::of(b))
}

fn lat_iou(a: &BFoV, b: &BFoV) -> f64 {
    let (alo, ahi) = (a.center.lat - a.vfov / 2.0, a.center.lat + a.vfov / 2.0);
    let (blo, bhi) = (b.center.lat - b.vfov / 2.0, b.center.lat + b.vfov / 2.0);
    let inter = (ahi.min(bhi) - alo.max(blo)).max(0.0);
    let union = a.vfov + b.vfov - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

fn canonical(mut b: BFoV) -> BFoV {
    b.center.lon = wrap_angle(b.center.lon);
    b.center.lat = b.center.lat.clamp(-FRAC_PI_2, FRAC_PI_2);
    b
}

/// Reassembles detections cut by the panorama seam, then runs per-category
/// non-maximum suppression.
///
/// Conceptually the panorama is extended by half its width so an object
/// straddling `lon = ±π` is seen whole. Here that is done directly: a
/// detection ending at `+π` and one of the same category starting at `-π`
/// with overlapping latitude range (1-D IoU at least `iou_threshold`) are
/// unioned across the seam. NMS then keeps the highest-scoring box of every
/// same-category cluster whose pairwise IoU exceeds `iou_threshold`.
pub fn extend_and_merge(detections: &[BFoV], iou_threshold: f64) -> Vec<BFoV> {
    let dets: Vec<BFoV> = detections.iter().copied().map(canonical).collect();
    let ends_at_seam = |b: &BFoV| (b.center.lon + b.hfov / 2.0 - PI).abs() <= SEAM_EPS;
    let starts_at_seam = |b: &BFoV| (b.center.lon - b.hfov / 2.0 + PI).abs() <= SEAM_EPS;

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| score_order(&dets[i], &dets[j]).then(i.cmp(&j)));

    let mut used = vec![false; dets.len()];
    let mut merged = Vec::with_capacity(dets.len());
    for &i in &order {
        if used[i] {
            continue;
        }
        used[i] = true;
        let a = dets[i];
        let partner = order.iter().copied().filter(|&j| !used[j]).find(|&j| {
            let b = &dets[j];
            b.category == a.category
                && ((ends_at_seam(&a) && starts_at_seam(b)) || (starts_at_seam(&a) && ends_at_seam(b)))
                && lat_iou(&a, b) >= iou_threshold
        });
        let Some(j) = partner else {
            merged.push(a);
            continue;
        };
        used[j] = true;
        let b = dets[j];
        let (right, left) = if ends_at_seam(&a) { (a, b) } else { (b, a) };
        // unwrap the left fragment one turn forward so both sit on one interval
        let lo = right.center.lon - right.hfov / 2.0;
        let hi = left.center.lon + left.hfov / 2.0 + TAU;
        let lat_lo = (right.center.lat - right.vfov / 2.0).min(left.center.lat - left.vfov / 2.0);
        let lat_hi = (right.center.lat + right.vfov / 2.0).max(left.center.lat + left.vfov / 2.0);
        merged.push(canonical(BFoV {
            center: SphericalDir {
                lon: 0.5 * (lo + hi),
                lat: 0.5 * (lat_lo + lat_hi),
            },
            hfov: hi - lo,
            vfov: lat_hi - lat_lo,
            score: a.score.max(b.score),
            category: a.category,
        }));
    }

    let mut order: Vec<usize> = (0..merged.len()).collect();
    order.sort_by(|&i, &j| score_order(&merged[i], &merged[j]).then(i.cmp(&j)));
    let mut kept: Vec<BFoV> = Vec::new();
    for i in order {
        let cand = merged[i];
        let suppressed = kept
            .iter()
            .any(|k| k.category == cand.category && bfov_iou(k, &cand) > iou_threshold);
        if !suppressed {
            kept.push(cand);
        }
    }
    kept
}

fn score_order(a: &BFoV, b: &BFoV) -> Ordering {
    b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal)
}
