//! Relation-driven refinement of indoor object layouts.
//!
//! Objects are yaw-only cuboids parameterized relative to their panorama
//! detections. The [`energy`] module scores an arrangement by physical
//! violations, disagreement with pairwise relations and drift from the
//! initial observation; [`optimizer`] minimizes that energy by gradient
//! descent with momentum. [`synth`] builds ground-truth scenes to test it on
//! and [`eval`] scores the results.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision;
pub mod energy;
pub mod error;
pub mod eval;
pub mod io;
pub mod math;
pub mod optimizer;
pub mod pano;
pub mod polygon;
pub mod relations;
pub mod scalar;
pub mod scene;
pub mod synth;

pub use error::{Error, Result};
