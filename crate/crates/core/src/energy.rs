//! Scene energy: collision, relation and observation terms, their weighted
//! sum, and its exact gradient with respect to every object's pose.
//!
//! Every term couples at most two objects, so the gradient is assembled from
//! forward-mode dual numbers over 7 (single-object terms) or 14 (pair terms)
//! pose parameters and scattered into the flat gradient vector.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::collision::{floor_ceiling_collision, sat_profile, wall_collision, AxisMode};
use crate::error::{Error, Result};
use crate::math::wrap_angle;
use crate::pano::{fov_iou, projected_fov, FovRect};
use crate::relations::{Label, RelationSet, RotLabel};
use crate::scalar::{Dual, Real};
use crate::scene::{pose_to_box, BFoV, LayoutShell, OrientedBox, PoseParams, Scene, PARAMS_PER_OBJECT};

/// Separations (to the floor, ceiling, another object or a wall) at or below this count as attached.
pub const ATTACH_EPS: f64 = 1e-6;

pub const PRESET_IGIBSON: &str = "paper-igibson";
pub const PRESET_STRUCTURED3D: &str = "paper-structured3d";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermWeights {
    pub oc: f64,
    pub wc: f64,
    pub fc: f64,
    pub cc: f64,
    pub rr: f64,
    pub oa: f64,
    pub fa: f64,
    pub ca: f64,
    pub rd: f64,
    pub delta: f64,
    pub dist: f64,
    pub size: f64,
    pub theta: f64,
    pub bp: f64,
}

impl Default for TermWeights {
    fn default() -> Self {
        Self::igibson()
    }
}

impl TermWeights {
    /// Weights tuned for synthetic iGibson-style scenes.
    pub fn igibson() -> Self {
        Self {
            oc: 1.0,
            wc: 1.0,
            fc: 1.0,
            cc: 1.0,
            rr: 0.1,
            oa: 1.0,
            fa: 1.0,
            ca: 1.0,
            rd: 0.01,
            delta: 0.0001,
            dist: 0.01,
            size: 1.0,
            theta: 0.001,
            bp: 10.0,
        }
    }

    /// Auto-searched weights for Structured3D. Relation weights other than
    /// `rd` were held at their iGibson values during that search.
    pub fn structured3d() -> Self {
        Self {
            oc: 0.0157,
            wc: 0.2625,
            fc: 0.3182,
            cc: 0.2036,
            rd: 0.0040,
            dist: 0.1404,
            size: 6.0502,
            theta: 0.0003,
            bp: 0.2895,
            ..Self::igibson()
        }
    }

    /// Learning rate found alongside [`TermWeights::structured3d`].
    pub const STRUCTURED3D_LEARNING_RATE: f64 = 0.0124;

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            PRESET_IGIBSON | "igibson" => Some(Self::igibson()),
            PRESET_STRUCTURED3D | "structured3d" => Some(Self::structured3d()),
            _ => None,
        }
    }

    /// All weights zero.
    pub fn zero() -> Self {
        Self::from_fn(|_| 0.0)
    }

    pub fn from_fn(f: impl Fn(Term) -> f64) -> Self {
        let mut w = Self::igibson();
        for t in Term::ALL {
            *w.get_mut(t) = f(t);
        }
        w
    }

    pub fn get(&self, t: Term) -> f64 {
        let mut copy = *self;
        *copy.get_mut(t)
    }

    pub fn get_mut(&mut self, t: Term) -> &mut f64 {
        match t {
            Term::Oc => &mut self.oc,
            Term::Wc => &mut self.wc,
            Term::Fc => &mut self.fc,
            Term::Cc => &mut self.cc,
            Term::Rr => &mut self.rr,
            Term::Oa => &mut self.oa,
            Term::Fa => &mut self.fa,
            Term::Ca => &mut self.ca,
            Term::Rd => &mut self.rd,
            Term::Bp => &mut self.bp,
            Term::Delta => &mut self.delta,
            Term::Dist => &mut self.dist,
            Term::Size => &mut self.size,
            Term::Theta => &mut self.theta,
        }
    }

    pub fn with(mut self, t: Term, value: f64) -> Self {
        *self.get_mut(t) = value;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for t in Term::ALL {
            let w = self.get(t);
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("weight {} = {w} must be finite and non-negative", t.name())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Oc,
    Wc,
    Fc,
    Cc,
    Rr,
    Oa,
    Fa,
    Ca,
    Rd,
    Bp,
    Delta,
    Dist,
    Size,
    Theta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermGroup {
    Collision,
    Relation,
    Observation,
}

impl Term {
    pub const ALL: [Term; 14] = [
        Term::Oc,
        Term::Wc,
        Term::Fc,
        Term::Cc,
        Term::Rr,
        Term::Oa,
        Term::Fa,
        Term::Ca,
        Term::Rd,
        Term::Bp,
        Term::Delta,
        Term::Dist,
        Term::Size,
        Term::Theta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::Oc => "oc",
            Term::Wc => "wc",
            Term::Fc => "fc",
            Term::Cc => "cc",
            Term::Rr => "rr",
            Term::Oa => "oa",
            Term::Fa => "fa",
            Term::Ca => "ca",
            Term::Rd => "rd",
            Term::Bp => "bp",
            Term::Delta => "delta",
            Term::Dist => "dist",
            Term::Size => "size",
            Term::Theta => "theta",
        }
    }

    pub fn group(self) -> TermGroup {
        match self {
            Term::Oc | Term::Wc | Term::Fc | Term::Cc => TermGroup::Collision,
            Term::Rr | Term::Oa | Term::Fa | Term::Ca | Term::Rd => TermGroup::Relation,
            _ => TermGroup::Observation,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per [`Term`].
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TermValues<T = f64>(pub [T; 14]);

impl<T> Index<Term> for TermValues<T> {
    type Output = T;
    fn index(&self, t: Term) -> &T {
        &self.0[t as usize]
    }
}

impl<T> IndexMut<Term> for TermValues<T> {
    fn index_mut(&mut self, t: Term) -> &mut T {
        &mut self.0[t as usize]
    }
}

impl<T: Real> TermValues<T> {
    fn zeros() -> Self {
        Self([T::zero(); 14])
    }
}

impl Serialize for TermValues<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(14))?;
        for t in Term::ALL {
            m.serialize_entry(t.name(), &self[t])?;
        }
        m.end()
    }
}

/// How symmetric object-object terms (`oc`, `oa`) are summed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PairCounting {
    /// Each unordered pair once.
    #[default]
    Once,
    /// Both orders, i.e. every unordered pair twice.
    BothOrders,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct EnergyModel {
    pub weights: TermWeights,
    pub axis_mode: AxisMode,
    pub pair_counting: PairCounting,
}

impl EnergyModel {
    pub fn new(weights: TermWeights) -> Self {
        Self {
            weights,
            ..Self::default()
        }
    }
}

impl From<TermWeights> for EnergyModel {
    fn from(w: TermWeights) -> Self {
        Self::new(w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub total: f64,
    pub collision: f64,
    pub relation: f64,
    pub observation: f64,
    /// Weighted contribution of each term.
    pub terms: TermValues,
    /// Weighted contributions attributed to each object; pair terms split evenly.
    pub per_object: Vec<TermValues>,
    /// `∂total/∂params`, 7 entries per object in [`PoseParams::to_array`] order.
    /// Empty when only values were requested.
    #[serde(skip)]
    pub gradient: Vec<f64>,
}

/// Precomputed, pose-independent inputs to the energy.
pub struct Evaluator<'a> {
    layout: &'a LayoutShell,
    walls: &'a [OrientedBox],
    detections: Vec<BFoV>,
    initial: Vec<PoseParams>,
    in_room: Vec<f64>,
    relations: Option<&'a RelationSet>,
    model: EnergyModel,
}

impl<'a> Evaluator<'a> {
    /// Full objective. The in-room weight of the wall term comes from the relation set.
    pub fn new(scene: &'a Scene, relations: &'a RelationSet, model: &EnergyModel) -> Result<Self> {
        relations.validate(scene.objects().len(), scene.walls().len())?;
        let mut ev = Self::without_relations(scene, model)?;
        ev.in_room = relations.in_room.clone();
        ev.relations = Some(relations);
        Ok(ev)
    }

    /// Collision and observation terms only, using each object's own in-room likelihood.
    pub fn without_relations(scene: &'a Scene, model: &EnergyModel) -> Result<Self> {
        model.weights.validate()?;
        Ok(Self {
            layout: scene.layout(),
            walls: scene.walls(),
            detections: scene.objects().iter().map(|o| o.detection).collect(),
            initial: scene.objects().iter().map(|o| *o.initial_pose()).collect(),
            in_room: scene.objects().iter().map(|o| o.in_room_likelihood).collect(),
            relations: None,
            model: *model,
        })
    }

    pub fn object_count(&self) -> usize {
        self.detections.len()
    }

    fn object_terms<T: Real>(&self, i: usize, pose: &PoseParams<T>) -> TermValues<T> {
        let w = &self.model.weights;
        let det = &self.detections[i];
        let b = pose_to_box(pose, det.center);
        let mut out = TermValues::<T>::zeros();

        out[Term::Wc] = wall_collision(&b, self.layout) * self.in_room[i] * w.wc;
        let (fc, cc) = floor_ceiling_collision(&b, self.layout);
        out[Term::Fc] = fc * w.fc;
        out[Term::Cc] = cc * w.cc;

        if let Some(rel) = self.relations {
            for (k, wall) in self.walls.iter().enumerate() {
                let wall = wall.lift::<T>();
                out[Term::Rr] += rotation_error(&b, &wall, &rel.rot_wall[i][k]) * w.rr;
                let l = rel.attach_wall[i][k].weight();
                if l > 0.0 {
                    out[Term::Oa] += snap(sat_profile(&b, &wall, self.model.axis_mode).separation()) * l * w.oa;
                }
            }
            out[Term::Fa] = plane_gap(b.bottom(), self.layout.floor_y) * rel.attach_floor[i].weight() * w.fa;
            out[Term::Ca] = plane_gap(b.top(), self.layout.ceiling_y) * rel.attach_ceiling[i].weight() * w.ca;
        }

        let iou = match projected_fov(&b) {
            Ok(r) => fov_iou(&r, &FovRect::of(det).lift()),
            Err(_) => T::zero(),
        };
        out[Term::Bp] = (T::cst(1.0) - iou) * w.bp;

        let p0 = &self.initial[i];
        out[Term::Delta] = ((pose.delta[0] - p0.delta[0]).abs() + (pose.delta[1] - p0.delta[1]).abs()) * w.delta;
        out[Term::Dist] = (pose.dist - p0.dist).abs() * w.dist;
        out[Term::Size] = ((pose.size.x - p0.size.x).abs() + (pose.size.y - p0.size.y).abs() + (pose.size.z - p0.size.z).abs()) * w.size;
        out[Term::Theta] = wrap_angle(pose.theta - p0.theta).abs() * w.theta;
        out
    }

    fn pair_terms<T: Real>(&self, i: usize, j: usize, pi: &PoseParams<T>, pj: &PoseParams<T>) -> TermValues<T> {
        let w = &self.model.weights;
        let bi = pose_to_box(pi, self.detections[i].center);
        let bj = pose_to_box(pj, self.detections[j].center);
        let mut out = TermValues::<T>::zeros();
        let mult = match self.model.pair_counting {
            PairCounting::Once => 1.0,
            PairCounting::BothOrders => 2.0,
        };
        let profile = sat_profile(&bi, &bj, self.model.axis_mode);
        out[Term::Oc] = profile.collision_energy() * mult * w.oc;

        if let Some(rel) = self.relations {
            let l = rel.attach_obj[i][j].weight();
            if l > 0.0 {
                out[Term::Oa] = snap(profile.separation()) * l * mult * w.oa;
            }
            out[Term::Rr] = rotation_error(&bi, &bj, &rel.rot_obj[i][j]) * w.rr
                + rotation_error(&bj, &bi, &rel.rot_obj[j][i]) * w.rr;
            out[Term::Rd] = order_violation(pi.dist, pj.dist, &rel.farther[i][j]) * w.rd;
        }
        out
    }

    /// Energy at `poses`; the gradient is filled in when requested.
    pub fn evaluate(&self, poses: &[PoseParams], with_gradient: bool) -> Result<EnergyReport> {
        let n = self.object_count();
        assert_eq!(poses.len(), n, "pose count mismatch");
        let mut terms = TermValues::<f64>::zeros();
        let mut per_object = vec![TermValues::<f64>::zeros(); n];
        let mut gradient = if with_gradient { vec![0.0; n * PARAMS_PER_OBJECT] } else { Vec::new() };

        for i in 0..n {
            let values = if with_gradient {
                let seeded = PoseParams::from_array(std::array::from_fn(|k| Dual::<7>::variable(poses[i].to_array()[k], k)));
                let duals = self.object_terms(i, &seeded);
                for t in Term::ALL {
                    let d = duals[t];
                    if !d.is_finite() {
                        return Err(non_finite(d.re, t, i));
                    }
                    for (g, e) in gradient[i * 7..i * 7 + 7].iter_mut().zip(d.eps) {
                        *g += e;
                    }
                }
                TermValues(duals.0.map(|d| d.re))
            } else {
                self.object_terms(i, &poses[i])
            };
            for t in Term::ALL {
                if !values[t].is_finite() {
                    return Err(non_finite(values[t], t, i));
                }
                terms[t] += values[t];
                per_object[i][t] += values[t];
            }
        }

        for i in 0..n {
            for j in i + 1..n {
                let values = if with_gradient {
                    let (a, b) = (poses[i].to_array(), poses[j].to_array());
                    let pi = PoseParams::from_array(std::array::from_fn(|k| Dual::<14>::variable(a[k], k)));
                    let pj = PoseParams::from_array(std::array::from_fn(|k| Dual::<14>::variable(b[k], k + 7)));
                    let duals = self.pair_terms(i, j, &pi, &pj);
                    for t in Term::ALL {
                        let d = duals[t];
                        if !d.is_finite() {
                            return Err(non_finite(d.re, t, i));
                        }
                        for k in 0..7 {
                            gradient[i * 7 + k] += d.eps[k];
                            gradient[j * 7 + k] += d.eps[k + 7];
                        }
                    }
                    TermValues(duals.0.map(|d| d.re))
                } else {
                    self.pair_terms(i, j, &poses[i], &poses[j])
                };
                for t in Term::ALL {
                    if !values[t].is_finite() {
                        return Err(non_finite(values[t], t, i));
                    }
                    terms[t] += values[t];
                    per_object[i][t] += 0.5 * values[t];
                    per_object[j][t] += 0.5 * values[t];
                }
            }
        }

        let group_sum = |g: TermGroup| Term::ALL.iter().filter(|t| t.group() == g).map(|&t| terms[t]).sum::<f64>();
        let collision = group_sum(TermGroup::Collision);
        let relation = group_sum(TermGroup::Relation);
        let observation = group_sum(TermGroup::Observation);
        Ok(EnergyReport {
            total: collision + relation + observation,
            collision,
            relation,
            observation,
            terms,
            per_object,
            gradient,
        })
    }

    pub fn value(&self, poses: &[PoseParams]) -> Result<f64> {
        Ok(self.evaluate(poses, false)?.total)
    }
}

fn non_finite(value: f64, term: Term, object: usize) -> Error {
    Error::NonFinite {
        step: 0,
        what: if value.is_finite() { "gradient" } else { "energy" },
        term: term.name(),
        object,
    }
}

/// Absolute angular error between the observed relative yaw `to - from` and the labeled bin center.
fn rotation_error<T: Real>(from: &OrientedBox<T>, to: &OrientedBox<T>, label: &RotLabel) -> T {
    let observed = wrap_angle(to.yaw - from.yaw);
    wrap_angle(observed - label.target()).abs() * label.confidence
}

fn snap<T: Real>(gap: T) -> T {
    if gap.value() <= ATTACH_EPS {
        T::zero()
    } else {
        gap
    }
}

/// Distance of a face to a plane, zero once attached.
fn plane_gap<T: Real>(face: T, plane: f64) -> T {
    snap((face - plane).abs())
}

/// View-distance difference when the depth order contradicts `farther` (i behind j).
fn order_violation<T: Real>(di: T, dj: T, farther: &Label) -> T {
    let diff = di - dj;
    let contradicts = if farther.value { diff.value() < 0.0 } else { diff.value() > 0.0 };
    if contradicts {
        diff.abs() * farther.confidence
    } else {
        T::zero()
    }
}

/// Collision energy, weighting the wall term by each object's in-room likelihood.
pub fn collision_energy(scene: &Scene, model: &EnergyModel) -> Result<f64> {
    Ok(Evaluator::without_relations(scene, model)?.evaluate(&scene.poses(), false)?.collision)
}

pub fn relation_energy(scene: &Scene, relations: &RelationSet, model: &EnergyModel) -> Result<f64> {
    Ok(Evaluator::new(scene, relations, model)?.evaluate(&scene.poses(), false)?.relation)
}

pub fn observation_energy(scene: &Scene, model: &EnergyModel) -> Result<f64> {
    Ok(Evaluator::without_relations(scene, model)?.evaluate(&scene.poses(), false)?.observation)
}

pub fn total_energy(scene: &Scene, relations: &RelationSet, model: &EnergyModel) -> Result<EnergyReport> {
    Evaluator::new(scene, relations, model)?.evaluate(&scene.poses(), true)
}

pub fn gradient(scene: &Scene, relations: &RelationSet, model: &EnergyModel) -> Result<Vec<f64>> {
    Ok(total_energy(scene, relations, model)?.gradient)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        assert_eq!(TermWeights::preset(PRESET_IGIBSON), Some(TermWeights::igibson()));
        let s = TermWeights::preset(PRESET_STRUCTURED3D).unwrap();
        assert_eq!(s.oc, 0.0157);
        assert_eq!(s.rr, 0.1);
        assert_eq!(s.delta, 0.0001);
        assert!(TermWeights::preset("nope").is_none());
    }

    #[test]
    fn igibson_weights() {
        let w = TermWeights::igibson();
        let expect = [
            (Term::Oc, 1.0),
            (Term::Wc, 1.0),
            (Term::Fc, 1.0),
            (Term::Cc, 1.0),
            (Term::Rr, 0.1),
            (Term::Oa, 1.0),
            (Term::Fa, 1.0),
            (Term::Ca, 1.0),
            (Term::Rd, 0.01),
            (Term::Delta, 0.0001),
            (Term::Dist, 0.01),
            (Term::Size, 1.0),
            (Term::Theta, 0.001),
            (Term::Bp, 10.0),
        ];
        for (t, v) in expect {
            assert_eq!(w.get(t), v, "{t}");
        }
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(TermWeights::igibson().with(Term::Rd, -1.0).validate().is_err());
    }

    #[test]
    fn order_violation_cases() {
        let behind = Label::certain(true);
        assert_eq!(order_violation(3.0, 2.0, &behind), 0.0);
        assert_eq!(order_violation(2.0, 3.0, &behind), 1.0);
        let front = Label::certain(false);
        assert_eq!(order_violation(2.0, 3.0, &front), 0.0);
        assert_eq!(order_violation(3.5, 3.0, &front), 0.5);
    }

    #[test]
    fn plane_gap_snaps_to_attached() {
        assert_eq!(plane_gap(-1.6 + 5e-7, -1.6), 0.0);
        assert!((plane_gap(-1.4, -1.6) - 0.2).abs() < 1e-12);
        assert!((plane_gap(-1.9, -1.6) - 0.3).abs() < 1e-12);
    }
}
