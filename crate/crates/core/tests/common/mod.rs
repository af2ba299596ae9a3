#![allow(dead_code)]

use roomopt::math::Vec3;
use roomopt::pano::{bfov_of_box, dir_to_lonlat};
use roomopt::scene::{box_to_pose, CameraFrame, LayoutShell, ObjectInstance, OrientedBox, PoseParams, Scene};

pub fn room() -> LayoutShell {
    LayoutShell::rectangle(-3.0, -3.0, 3.0, 3.0, -1.6, 1.2)
}

/// Object whose detection is the exact projection of `b`.
pub fn object(id: u32, b: OrientedBox) -> ObjectInstance {
    let det = bfov_of_box(&b, 1.0, id).unwrap();
    ObjectInstance::new(id, id, det, box_to_pose(&b, det.center), 1.0)
}

/// Object observed at `b` but currently posed at `initial` shifted by `offset` in parameter space.
pub fn offset_object(id: u32, b: OrientedBox, offset: [f64; 7]) -> ObjectInstance {
    let det = bfov_of_box(&b, 1.0, id).unwrap();
    let initial = box_to_pose(&b, det.center);
    let mut p = initial.to_array();
    for (v, o) in p.iter_mut().zip(offset) {
        *v += o;
    }
    ObjectInstance::with_initial_pose(id, id, det, PoseParams::from_array(p), initial, 1.0)
}

pub fn scene(objects: Vec<ObjectInstance>) -> Scene {
    Scene::new(CameraFrame::default(), room(), objects).unwrap()
}

pub fn cube(center: Vec3, side: f64, yaw: f64) -> OrientedBox {
    OrientedBox::new(center, Vec3::splat(side), yaw)
}

pub fn direction_of(b: &OrientedBox) -> roomopt::scene::SphericalDir {
    dir_to_lonlat(b.center.normalized()).unwrap()
}
