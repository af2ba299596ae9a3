//! Planar polygon queries on the floor plane, in `(x, z)` coordinates.

use crate::scalar::Real;

/// Points closer than this to an edge count as inside.
pub const BOUNDARY_EPS: f64 = 1e-9;

/// Shoelace area; positive for counter-clockwise vertex order.
pub fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, z0] = poly[i];
        let [x1, z1] = poly[(i + 1) % n];
        acc += x0 * z1 - x1 * z0;
    }
    0.5 * acc
}

fn segment_distance_sq(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dz * dz;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dz) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cz) = (a[0] + t * dx - p[0], a[1] + t * dz - p[1]);
    cx * cx + cz * cz
}

fn nearest_edge(poly: &[[f64; 2]], p: [f64; 2]) -> (usize, f64) {
    let n = poly.len();
    let mut best = (0, f64::INFINITY);
    for i in 0..n {
        let d = segment_distance_sq(p, poly[i], poly[(i + 1) % n]);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Unsigned distance from `p` to the polygon boundary.
pub fn boundary_distance(poly: &[[f64; 2]], p: [f64; 2]) -> f64 {
    nearest_edge(poly, p).1.sqrt()
}

/// Even-odd containment; points on the boundary (within [`BOUNDARY_EPS`]) are inside.
pub fn contains(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    if boundary_distance(poly, p) <= BOUNDARY_EPS {
        return true;
    }
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let [xi, zi] = poly[i];
        let [xj, zj] = poly[(i + n - 1) % n];
        if (zi > p[1]) != (zj > p[1]) {
            let x_cross = xi + (p[1] - zi) * (xj - xi) / (zj - zi);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Distance to the boundary, negative inside.
pub fn signed_distance(poly: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let d = boundary_distance(poly, p);
    if contains(poly, p) {
        -d
    } else {
        d
    }
}

/// Differentiable distance from an outside point to the boundary. The nearest
/// edge is chosen on primal values.
pub fn boundary_distance_of<T: Real>(poly: &[[f64; 2]], p: [T; 2]) -> T {
    let pv = [p[0].value(), p[1].value()];
    let (i, _) = nearest_edge(poly, pv);
    let a = poly[i];
    let b = poly[(i + 1) % poly.len()];
    let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dz * dz;
    let t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dz) / len2;
    let t = if t.value() <= 0.0 {
        T::zero()
    } else if t.value() >= 1.0 {
        T::cst(1.0)
    } else {
        t
    };
    let cx = t * dx + a[0] - p[0];
    let cz = t * dz + a[1] - p[1];
    (cx * cx + cz * cz).sqrt()
}

/// True if the closed segments `ab` and `cd` share a point.
pub fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    fn orient(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    }
    fn on_segment(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> bool {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    }
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}
