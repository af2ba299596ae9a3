//! Gradient descent with classical momentum over all object poses.

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyModel, Evaluator};
use crate::error::{Error, Result};
use crate::math::wrap_angle;
use crate::relations::RelationSet;
use crate::scene::{PoseParams, Scene, PARAMS_PER_OBJECT};

/// Lower bound kept on distance and size components after every step.
pub const MIN_EXTENT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolvePolicy {
    #[default]
    Final,
    BestEnergy,
}

impl std::str::FromStr for ResolvePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final" => Ok(Self::Final),
            "best-energy" | "best" => Ok(Self::BestEnergy),
            other => Err(Error::Config(format!("unknown policy `{other}` (expected final or best-energy)"))),
        }
    }
}

/// Multipliers on the learning rate per parameter group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupScales {
    pub delta: f64,
    pub dist: f64,
    pub size: f64,
    pub theta: f64,
}

impl Default for GroupScales {
    fn default() -> Self {
        Self {
            delta: 1.0,
            dist: 1.0,
            size: 1.0,
            theta: 1.0,
        }
    }
}

impl GroupScales {
    /// Scales that give every group a comparable step in meters.
    ///
    /// A change of `δ` moves the box center by about `d·δ`; at a view
    /// distance near 3 m a `δ` scale ten times below the metric groups
    /// matches their displacement.
    pub fn metric() -> Self {
        Self {
            delta: 1e-4,
            dist: 1e-3,
            size: 1e-3,
            theta: 1e-3,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "unit" => Some(Self::default()),
            "metric" => Some(Self::metric()),
            _ => None,
        }
    }

    fn per_param(&self) -> [f64; PARAMS_PER_OBJECT] {
        [self.delta, self.delta, self.dist, self.size, self.size, self.size, self.theta]
    }
}

/// Stop once the energy improved by less than `min_delta` over `window` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauStop {
    pub window: usize,
    pub min_delta: f64,
}

impl Default for PlateauStop {
    fn default() -> Self {
        Self {
            window: 10,
            min_delta: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub momentum: f64,
    pub scales: GroupScales,
    /// Record every `trajectory_stride`-th step (the last step is always kept).
    pub trajectory_stride: usize,
    pub policy: ResolvePolicy,
    pub plateau: Option<PlateauStop>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            steps: 100,
            momentum: 0.9,
            scales: GroupScales::default(),
            trajectory_stride: 1,
            policy: ResolvePolicy::Final,
            plateau: None,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.steps < 1 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.trajectory_stride < 1 {
            return Err(Error::Config("trajectory stride must be at least 1".into()));
        }
        let s = self.scales;
        if [s.delta, s.dist, s.size, s.theta].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("group scales must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub total: f64,
    pub poses: Vec<PoseParams>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn first(&self) -> Option<&Snapshot> {
        self.snapshots.first()
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn best(&self) -> Option<&Snapshot> {
        // earliest snapshot wins ties
        self.snapshots
            .iter()
            .fold(None, |best: Option<&Snapshot>, s| match best {
                Some(b) if b.total <= s.total => Some(b),
                _ => Some(s),
            })
    }

    pub fn totals(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.total).collect()
    }

    /// Snapshot indices at multiples of `stride` plus the last one.
    pub fn strided(&self, stride: usize) -> Vec<&Snapshot> {
        let stride = stride.max(1);
        let last = self.snapshots.len().saturating_sub(1);
        self.snapshots
            .iter()
            .enumerate()
            .filter(|(k, s)| s.step % stride == 0 || *k == last)
            .map(|(_, s)| s)
            .collect()
    }

    pub fn validate(&self, objects: usize) -> Result<()> {
        if self.snapshots.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        for w in self.snapshots.windows(2) {
            if w[1].step <= w[0].step {
                return Err(Error::Config(format!("trajectory steps not increasing at {}", w[1].step)));
            }
        }
        for s in &self.snapshots {
            if s.poses.len() != objects {
                return Err(Error::Config(format!(
                    "snapshot {} has {} poses, scene has {objects} objects",
                    s.step,
                    s.poses.len()
                )));
            }
        }
        Ok(())
    }
}

fn flatten(poses: &[PoseParams]) -> Vec<f64> {
    poses.iter().flat_map(|p| p.to_array()).collect()
}

fn unflatten(params: &[f64]) -> Vec<PoseParams> {
    params
        .chunks_exact(PARAMS_PER_OBJECT)
        .map(|c| PoseParams::from_array(c.try_into().expect("chunk of 7")))
        .collect()
}

fn project(params: &mut [f64]) {
    for p in params.chunks_exact_mut(PARAMS_PER_OBJECT) {
        p[2] = p[2].max(MIN_EXTENT);
        for s in &mut p[3..6] {
            *s = s.max(MIN_EXTENT);
        }
        p[6] = wrap_angle(p[6]);
    }
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::NonFinite { what, term, object, .. } => Error::NonFinite { step, what, term, object },
        other => other,
    }
}

/// Minimizes the scene energy over all object poses.
///
/// Update rule: `v ← μ·v − lr·scale∘∇E`, `p ← p + v`, then yaw is wrapped to
/// `[-π, π)` and distance and sizes are clamped to at least [`MIN_EXTENT`].
/// Layout and relations stay fixed.
pub fn optimize(
    scene: &Scene,
    relations: &RelationSet,
    model: &EnergyModel,
    config: &OptimConfig,
) -> Result<(Scene, Trajectory)> {
    config.validate()?;
    let evaluator = Evaluator::new(scene, relations, model)?;
    let n = scene.objects().len();
    let scales: Vec<f64> = (0..n).flat_map(|_| config.scales.per_param()).collect();

    let mut params = flatten(&scene.poses());
    let mut velocity = vec![0.0; params.len()];
    let mut report = evaluator.evaluate(&unflatten(&params), true).map_err(|e| at_step(e, 0))?;
    let mut trajectory = Trajectory {
        snapshots: vec![Snapshot {
            step: 0,
            total: report.total,
            poses: scene.poses(),
        }],
    };
    let mut history = vec![report.total];

    for step in 1..=config.steps {
        for ((v, g), s) in velocity.iter_mut().zip(&report.gradient).zip(&scales) {
            *v = config.momentum * *v - config.learning_rate * s * g;
        }
        for (p, v) in params.iter_mut().zip(&velocity) {
            *p += v;
        }
        project(&mut params);
        let poses = unflatten(&params);
        report = evaluator.evaluate(&poses, true).map_err(|e| at_step(e, step))?;
        history.push(report.total);

        let plateaued = config.plateau.is_some_and(|p| {
            history.len() > p.window && history[history.len() - 1 - p.window] - report.total < p.min_delta
        });
        let last = step == config.steps || plateaued;
        if step % config.trajectory_stride == 0 || last {
            trajectory.snapshots.push(Snapshot {
                step,
                total: report.total,
                poses,
            });
        }
        if last {
            break;
        }
    }

    let result = resolve_scene(scene, &trajectory, config.policy)?;
    Ok((result, trajectory))
}

/// Scene at the final or the lowest-energy snapshot.
pub fn resolve_scene(base: &Scene, trajectory: &Trajectory, policy: ResolvePolicy) -> Result<Scene> {
    let snap = match policy {
        ResolvePolicy::Final => trajectory.last(),
        ResolvePolicy::BestEnergy => trajectory.best(),
    }
    .ok_or(Error::EmptyTrajectory)?;
    if snap.poses.len() != base.objects().len() {
        return Err(Error::Config("snapshot does not match the scene's objects".into()));
    }
    Ok(base.with_poses(&snap.poses))
}
