//! Point reaching, trajectory tracking, and shape formation on the strip.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::adjoint::{LossTerm, Objective, ObjectiveKind};
use crate::error::{Error, Result};
use crate::rollout::{Dynamics, RolloutStart};
use crate::solver::{solve_equilibrium, TrustRegionSettings};
use crate::strip::{self, Configuration, Dof, StripModel, DIM};

pub const POSITION_TOLERANCE: f64 = 1e-6;
pub const TRAJECTORY_TOLERANCE: f64 = 1e-6;
pub const CURVATURE_TOLERANCE: f64 = 1e-4;

/// Loading-path increments used to build pre-deformed states and targets.
const LOADING_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    PointTarget,
    TrajectoryTracking,
    ShapeFormation,
}

impl TaskKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "point_target" | "point" | "1" => Ok(TaskKind::PointTarget),
            "trajectory_tracking" | "trajectory" | "2" => Ok(TaskKind::TrajectoryTracking),
            "shape_formation" | "shape" | "3" => Ok(TaskKind::ShapeFormation),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::PointTarget => "point_target",
            TaskKind::TrajectoryTracking => "trajectory_tracking",
            TaskKind::ShapeFormation => "shape_formation",
        }
    }

    pub fn dynamics(self) -> Dynamics {
        match self {
            TaskKind::ShapeFormation => Dynamics::PlanarPose,
            _ => Dynamics::Translation,
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            TaskKind::PointTarget => POSITION_TOLERANCE,
            TaskKind::TrajectoryTracking => TRAJECTORY_TOLERANCE,
            TaskKind::ShapeFormation => CURVATURE_TOLERANCE,
        }
    }

    /// Default per-component control bound `u_max`.
    pub fn default_u_max(self, length: f64) -> Vec<f64> {
        match self {
            TaskKind::ShapeFormation => vec![length, length, 4.0],
            _ => vec![0.5 * length, 0.5 * length],
        }
    }
}

/// Reference curves for the tracked node, as offsets from an anchor point
/// (the node's initial position), so every curve starts on the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "curve", rename_all = "snake_case")]
pub enum ReferenceCurve {
    /// `(drift·λ, a sin 2πnλ)`.
    Sinusoid { amplitude: f64, cycles: f64, drift: f64 },
    /// Circle through the anchor, traversed `arc_fraction` turns starting at
    /// polar angle `start_angle` about its center.
    Circle { radius: f64, arc_fraction: f64, start_angle: f64 },
    /// Transverse offset `0` on `[0, P/2)` and `−a` on `[P/2, P)`,
    /// right-continuous at the jumps.
    SquareWave { amplitude: f64, period: f64 },
    /// Transverse triangle wave of amplitude `a` starting at `0`, rising first.
    TriangleWave { amplitude: f64, period: f64 },
}

impl ReferenceCurve {
    pub fn offset(&self, lambda: f64) -> [f64; 2] {
        match *self {
            ReferenceCurve::Sinusoid { amplitude, cycles, drift } => {
                [drift * lambda, amplitude * (2.0 * PI * cycles * lambda).sin()]
            }
            ReferenceCurve::Circle {
                radius,
                arc_fraction,
                start_angle,
            } => {
                let theta = start_angle + 2.0 * PI * arc_fraction * lambda;
                [
                    radius * (theta.cos() - start_angle.cos()),
                    radius * (theta.sin() - start_angle.sin()),
                ]
            }
            ReferenceCurve::SquareWave { amplitude, period } => {
                let phase = (lambda / period).rem_euclid(1.0);
                [0.0, if phase < 0.5 { 0.0 } else { -amplitude }]
            }
            ReferenceCurve::TriangleWave { amplitude, period } => {
                let phase = (lambda / period + 0.25).rem_euclid(1.0);
                [0.0, amplitude * (1.0 - 4.0 * (phase - 0.5).abs())]
            }
        }
    }

    pub fn point(&self, anchor: [f64; 2], lambda: f64) -> [f64; 2] {
        let o = self.offset(lambda);
        [anchor[0] + o[0], anchor[1] + o[1]]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReferenceCurve::Sinusoid { .. } => "sinusoid",
            ReferenceCurve::Circle { .. } => "circle",
            ReferenceCurve::SquareWave { .. } => "square_wave",
            ReferenceCurve::TriangleWave { .. } => "triangle_wave",
        }
    }
}

/// Initial configuration recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum InitialShape {
    Straight,
    /// Right clamp moved inward by `compression·L` along a loading path,
    /// buckled toward `sign(direction)·y`.
    Buckled { compression: f64, direction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskTarget {
    Point { node: usize, point: [f64; 2] },
    Trajectory { node: usize, anchor: [f64; 2], reference: ReferenceCurve },
    Curvature { profile: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub name: String,
    pub target: TaskTarget,
    pub tolerance: f64,
    pub initial: InitialShape,
}

impl TaskSpec {
    pub fn validate(&self, model: &StripModel) -> Result<()> {
        let free = |node: usize| {
            if model.is_boundary_node(node) || node >= model.node_count() {
                Err(Error::Config(format!("target node {node} is not a free node")))
            } else {
                Ok(())
            }
        };
        match (&self.kind, &self.target) {
            (TaskKind::PointTarget, TaskTarget::Point { node, .. }) => free(*node),
            (TaskKind::TrajectoryTracking, TaskTarget::Trajectory { node, .. }) => free(*node),
            (TaskKind::ShapeFormation, TaskTarget::Curvature { profile }) => {
                if profile.len() == model.node_count() - 2 {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "curvature profile needs {} entries, got {}",
                        model.node_count() - 2,
                        profile.len()
                    )))
                }
            }
            _ => Err(Error::Config(format!("target does not match task kind {:?}", self.kind))),
        }
    }

    pub fn succeeded(&self, loss: f64) -> bool {
        loss <= self.tolerance
    }
}

fn node_position(model: &StripModel, q_b: &[f64], q_f: &[f64], node: usize) -> [f64; 2] {
    let mut p = [0.0; 2];
    for (c, pc) in p.iter_mut().enumerate() {
        *pc = match model.dof(node, c) {
            Dof::Free(j) => q_f[j],
            Dof::Boundary(j) => q_b[j],
        };
    }
    p
}

fn point_term(model: &StripModel, q_b: &[f64], q_f: &[f64], node: usize, target: [f64; 2]) -> LossTerm {
    let p = node_position(model, q_b, q_f, node);
    let r = [p[0] - target[0], p[1] - target[1]];
    let mut grad_x = vec![0.0; q_f.len()];
    let mut grad_z = vec![0.0; q_b.len()];
    for c in 0..DIM {
        match model.dof(node, c) {
            Dof::Free(j) => grad_x[j] = r[c],
            Dof::Boundary(j) => grad_z[j] = r[c],
        }
    }
    LossTerm {
        value: 0.5 * (r[0] * r[0] + r[1] * r[1]),
        grad_x,
        grad_z,
    }
}

/// `½‖p_i − p*‖²` with its gradients.
pub fn terminal_loss_point(model: &StripModel, cfg: &Configuration, node: usize, target: [f64; 2]) -> Result<LossTerm> {
    cfg.validate(model)?;
    Ok(point_term(model, &cfg.q_b, &cfg.q_f, node, target))
}

/// `½‖p_node − p*(λ)‖²` against a reference curve.
pub fn running_loss_tracking(
    model: &StripModel,
    cfg: &Configuration,
    lambda: f64,
    node: usize,
    anchor: [f64; 2],
    reference: &ReferenceCurve,
) -> Result<LossTerm> {
    cfg.validate(model)?;
    Ok(point_term(model, &cfg.q_b, &cfg.q_f, node, reference.point(anchor, lambda)))
}

fn curvature_term(model: &StripModel, q_b: &[f64], q_f: &[f64], target: &[f64], with_grad: bool) -> Result<LossTerm> {
    let pos = strip::positions_of(model, q_b, q_f);
    let dl = model.rest_edge_length();
    let mut value = 0.0;
    let mut grad_x = vec![0.0; q_f.len()];
    let mut grad_z = vec![0.0; q_b.len()];
    for i in 1..pos.len() - 1 {
        let (t, g) = strip::turning_tangent_node_gradient(model, &pos, i)?;
        let diff = t / dl - target[i - 1];
        value += diff * diff * dl;
        if with_grad {
            // d/dq [(T/Δl − κ*)² Δl] = 2 (κ − κ*) ∇T
            for (k, node) in [i - 1, i, i + 1].into_iter().enumerate() {
                for c in 0..DIM {
                    let v = 2.0 * diff * g[k * DIM + c];
                    match model.dof(node, c) {
                        Dof::Free(j) => grad_x[j] += v,
                        Dof::Boundary(j) => grad_z[j] += v,
                    }
                }
            }
        }
    }
    Ok(LossTerm { value, grad_x, grad_z })
}

/// `Σ_i (κ_i − κ*_i)² Δl` over interior nodes with its gradients.
pub fn terminal_loss_curvature(model: &StripModel, cfg: &Configuration, target: &[f64]) -> Result<LossTerm> {
    cfg.validate(model)?;
    if target.len() != model.node_count() - 2 {
        return Err(Error::InvalidInput("curvature target has wrong length".into()));
    }
    curvature_term(model, &cfg.q_b, &cfg.q_f, target, true)
}

/// A task bound to a model, usable as a rollout objective.
pub struct TaskObjective<'a> {
    pub model: &'a StripModel,
    pub spec: &'a TaskSpec,
}

impl Objective for TaskObjective<'_> {
    fn kind(&self) -> ObjectiveKind {
        match self.spec.target {
            TaskTarget::Trajectory { .. } => ObjectiveKind::Running,
            _ => ObjectiveKind::Terminal,
        }
    }

    fn eval(&self, lambda: f64, x: &[f64], z: &[f64], with_grad: bool) -> Result<LossTerm> {
        match &self.spec.target {
            TaskTarget::Point { node, point } => Ok(point_term(self.model, z, x, *node, *point)),
            TaskTarget::Trajectory { node, anchor, reference } => {
                Ok(point_term(self.model, z, x, *node, reference.point(*anchor, lambda)))
            }
            TaskTarget::Curvature { profile } => curvature_term(self.model, z, x, profile, with_grad),
        }
    }
}

pub(crate) fn seed_bump(model: &StripModel, q_f: &mut [f64], amplitude: f64) {
    let n = model.node_count();
    for k in 0..model.free_node_count() {
        let s = (k + 2) as f64 / (n - 1) as f64;
        q_f[k * DIM + 1] += amplitude * (PI * s).sin();
    }
}

/// Follow a straight-line path of the clamps from `from` to `to` in
/// `LOADING_STEPS` increments, warm-starting every solve.
fn loading_path(
    model: &StripModel,
    from: &Configuration,
    to_q_b: &[f64],
    settings: &TrustRegionSettings,
) -> Result<Configuration> {
    let mut q_f = from.q_f.clone();
    let mut q_b = from.q_b.clone();
    for step in 1..=LOADING_STEPS {
        let t = step as f64 / LOADING_STEPS as f64;
        q_b = from.q_b.iter().zip(to_q_b).map(|(a, b)| a + t * (b - a)).collect();
        let eq = solve_equilibrium(model, &q_b, &q_f, settings)?;
        if !eq.converged() {
            return Err(Error::SolverFailure(format!("loading path stalled at increment {step}: {:?}", eq.status)));
        }
        q_f = eq.q_f_star;
    }
    Configuration::new(model, q_b, q_f)
}

/// Right clamp displaced rigidly by `(dx, dy)` and rotated by `angle` about
/// its midpoint.
fn posed_boundary(model: &StripModel, base: &Configuration, dx: f64, dy: f64, angle: f64) -> Vec<f64> {
    let mut q_b = base.q_b.clone();
    let cx = 0.5 * (q_b[4] + q_b[6]);
    let cy = 0.5 * (q_b[5] + q_b[7]);
    let (s, c) = angle.sin_cos();
    for j in [4, 6] {
        let (rx, ry) = (q_b[j] - cx, q_b[j + 1] - cy);
        q_b[j] = cx + dx + c * rx - s * ry;
        q_b[j + 1] = cy + dy + s * rx + c * ry;
    }
    let _ = model;
    q_b
}

/// Converged start state for a task.
pub fn make_initial_state(model: &StripModel, shape: &InitialShape, settings: &TrustRegionSettings) -> Result<RolloutStart> {
    let straight = model.straight_configuration([0.0, 0.0]);
    let cfg = match *shape {
        InitialShape::Straight => straight,
        InitialShape::Buckled { compression, direction } => {
            if !(compression > 0.0 && compression < 0.5) || direction == 0.0 {
                return Err(Error::Config("buckled start needs 0 < compression < 0.5 and a nonzero direction".into()));
            }
            let mut seeded = straight.clone();
            seed_bump(model, &mut seeded.q_f, direction.signum() * 1e-3 * model.length());
            let to = posed_boundary(model, &straight, -compression * model.length(), 0.0, 0.0);
            loading_path(model, &seeded, &to, settings)?
        }
    };
    Ok(RolloutStart {
        x: cfg.q_f,
        z: cfg.q_b,
        lambda: 0.0,
    })
}

pub const PRESET_COUNT: usize = 4;

/// Chord of the mirrored-C shape presets as a fraction of `L`.
const C_CHORD: f64 = 0.5;

fn buckled_default() -> InitialShape {
    InitialShape::Buckled {
        compression: 0.1,
        direction: 1.0,
    }
}

/// The four documented benchmark cases of each task.
pub fn preset(kind: TaskKind, index: usize, model: &StripModel, settings: &TrustRegionSettings) -> Result<TaskSpec> {
    if index >= PRESET_COUNT {
        return Err(Error::Config(format!("preset index {index} out of range 0..{PRESET_COUNT}")));
    }
    let n = model.node_count();
    let last = n - 1;
    match kind {
        TaskKind::PointTarget => {
            // reachable targets: where the node lands after moving the clamps
            // transversely by (left, right)
            let recipes = [
                (last / 2, 0.01, -0.01),
                (last / 4, -0.015, 0.005),
                (3 * last / 4, 0.02, 0.01),
                (last / 3, -0.01, -0.02),
            ];
            let (node, left, right) = recipes[index];
            let initial = buckled_default();
            let start = make_initial_state(model, &initial, settings)?;
            let from = Configuration::new(model, start.z.clone(), start.x.clone())?;
            let mut to = start.z.clone();
            to[1] += left;
            to[3] += left;
            to[5] += right;
            to[7] += right;
            let end = loading_path(model, &from, &to, settings)?;
            Ok(TaskSpec {
                kind,
                name: format!("point_{index}"),
                target: TaskTarget::Point {
                    node,
                    point: node_position(model, &end.q_b, &end.q_f, node),
                },
                tolerance: kind.tolerance(),
                initial,
            })
        }
        TaskKind::TrajectoryTracking => {
            let reference = match index {
                0 => ReferenceCurve::Sinusoid {
                    amplitude: 0.01,
                    cycles: 1.0,
                    drift: 0.0,
                },
                1 => ReferenceCurve::Circle {
                    radius: 0.003,
                    arc_fraction: 1.0,
                    start_angle: -0.5 * PI,
                },
                2 => ReferenceCurve::SquareWave {
                    amplitude: 0.01,
                    period: 0.5,
                },
                _ => ReferenceCurve::TriangleWave {
                    amplitude: 0.01,
                    period: 0.5,
                },
            };
            let initial = buckled_default();
            let start = make_initial_state(model, &initial, settings)?;
            let node = last / 2;
            Ok(TaskSpec {
                kind,
                name: format!("trajectory_{}", reference.name()),
                target: TaskTarget::Trajectory {
                    node,
                    anchor: node_position(model, &start.z, &start.x, node),
                    reference,
                },
                tolerance: kind.tolerance(),
                initial,
            })
        }
        TaskKind::ShapeFormation => {
            // presets 0 and 1 share one terminal pose: the right clamp turned
            // half a revolution to face back along the chord, reached by
            // rotating either way
            let l = model.length();
            let c_pose = |turn: f64| (C_CHORD * l - (l - 0.5 * model.rest_edge_length()), 0.0, turn);
            let shifted_arc = |turn: f64, shift: f64| {
                let (dx, dy, angle) = arc_pose(model, turn);
                (dx - shift * l, dy, angle)
            };
            let (dx, dy, angle) = match index {
                0 => c_pose(PI),
                1 => c_pose(-PI),
                2 => shifted_arc(1.2, 0.0),
                _ => shifted_arc(2.0, 0.05),
            };
            let straight = model.straight_configuration([0.0, 0.0]);
            let end = pose_path(model, &straight, (dx, dy, angle), settings)?;
            let profile = strip::curvature_profile(model, &end)?;
            Ok(TaskSpec {
                kind,
                name: format!("shape_{index}"),
                target: TaskTarget::Curvature { profile },
                tolerance: kind.tolerance(),
                initial: InitialShape::Straight,
            })
        }
    }
}

/// Right-clamp pose `(dx, dy, angle)` placing its midpoint on a circular
/// arc of length `L` through the left clamp with total turning `turn`.
fn arc_pose(model: &StripModel, turn: f64) -> (f64, f64, f64) {
    let l = model.length();
    let s = l - 0.5 * model.rest_edge_length();
    let kappa = turn / l;
    let theta = kappa * s;
    (theta.sin() / kappa - s, (1.0 - theta.cos()) / kappa, theta)
}

/// Rigidly move the right clamp from `from` through `LOADING_STEPS`
/// interpolated poses.
pub(crate) fn pose_path(
    model: &StripModel,
    from: &Configuration,
    pose: (f64, f64, f64),
    settings: &TrustRegionSettings,
) -> Result<Configuration> {
    let mut q_f = from.q_f.clone();
    let mut q_b = from.q_b.clone();
    for step in 1..=LOADING_STEPS {
        let t = step as f64 / LOADING_STEPS as f64;
        q_b = posed_boundary(model, from, t * pose.0, t * pose.1, t * pose.2);
        let eq = solve_equilibrium(model, &q_b, &q_f, settings)?;
        if !eq.converged() {
            return Err(Error::SolverFailure(format!("pose path stalled at increment {step}: {:?}", eq.status)));
        }
        q_f = eq.q_f_star;
    }
    Configuration::new(model, q_b, q_f)
}

/// Mean signed curvature; its sign identifies the buckling branch.
pub fn mean_curvature(model: &StripModel, cfg: &Configuration) -> Result<f64> {
    let k = strip::curvature_profile(model, cfg)?;
    Ok(k.iter().sum::<f64>() / k.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strip::StripParams;

    fn model(n: usize) -> StripModel {
        StripModel::new(&StripParams {
            node_count: n,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn point_loss_hand_values() {
        let m = model(11);
        let cfg = m.straight_configuration([0.0, 0.0]);
        let p = node_position(&m, &cfg.q_b, &cfg.q_f, 5);
        let zero = terminal_loss_point(&m, &cfg, 5, p).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(zero.grad_x.iter().all(|g| *g == 0.0));
        let t = terminal_loss_point(&m, &cfg, 5, [p[0] - 3e-3, p[1] - 4e-3]).unwrap();
        assert!((t.value - 1.25e-5).abs() < 1e-18);
        let j = (5 - 2) * 2;
        assert!((t.grad_x[j] - 3e-3).abs() < 1e-15 && (t.grad_x[j + 1] - 4e-3).abs() < 1e-15);
        assert_eq!(t.grad_x.iter().filter(|g| **g != 0.0).count(), 2);
        assert!(t.grad_z.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn reference_curve_hand_values() {
        let s = ReferenceCurve::Sinusoid {
            amplitude: 0.02,
            cycles: 1.0,
            drift: 0.0,
        };
        assert!((s.offset(0.25)[1] - 0.02).abs() < 1e-15);
        let sq = ReferenceCurve::SquareWave {
            amplitude: 0.01,
            period: 0.5,
        };
        assert_eq!(sq.offset(0.25)[1], -0.01);
        assert_eq!(sq.offset(0.2499)[1], 0.0);
        assert_eq!(sq.offset(0.5)[1], 0.0);
        let tri = ReferenceCurve::TriangleWave {
            amplitude: 0.01,
            period: 0.5,
        };
        assert!((tri.offset(0.125)[1] - 0.01).abs() < 1e-15);
        assert!((tri.offset(0.375)[1] + 0.01).abs() < 1e-15);
        let c = ReferenceCurve::Circle {
            radius: 0.5,
            arc_fraction: 1.0,
            start_angle: 0.3,
        };
        for curve in [s, sq, tri, c.clone()] {
            assert_eq!(curve.offset(0.0), [0.0, 0.0], "{curve:?}");
        }
        // every point of the circle is one radius from its center
        let center = [-0.5 * 0.3_f64.cos(), -0.5 * 0.3_f64.sin()];
        for k in 0..10 {
            let p = c.offset(k as f64 / 10.0);
            assert!(((p[0] - center[0]).hypot(p[1] - center[1]) - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn curvature_loss_of_straight_strip() {
        let m = model(21);
        let cfg = m.straight_configuration([0.0, 0.0]);
        let c = 3.0;
        let target = vec![c; 19];
        let t = terminal_loss_curvature(&m, &cfg, &target).unwrap();
        assert!((t.value - 19.0 * c * c * m.rest_edge_length()).abs() < 1e-12);
        let exact = terminal_loss_curvature(&m, &cfg, &[0.0; 19]).unwrap();
        assert!(exact.value < 1e-25);
    }

    fn fd_check(obj: &TaskObjective<'_>, lambda: f64, x: &[f64], z: &[f64]) {
        let t = obj.eval(lambda, x, z, true).unwrap();
        let h = 1e-6;
        let scale = t.grad_x.iter().chain(&t.grad_z).fold(0.0_f64, |a, g| a.max(g.abs()));
        for (i, g) in t.grad_x.iter().enumerate() {
            let mut p = x.to_vec();
            p[i] += h;
            let mut m = x.to_vec();
            m[i] -= h;
            let fd = (obj.eval(lambda, &p, z, false).unwrap().value - obj.eval(lambda, &m, z, false).unwrap().value) / (2.0 * h);
            assert!((fd - g).abs() <= 1e-6 * scale, "x{i}: {fd} vs {g}");
        }
        for (i, g) in t.grad_z.iter().enumerate() {
            let mut p = z.to_vec();
            p[i] += h;
            let mut m = z.to_vec();
            m[i] -= h;
            let fd = (obj.eval(lambda, x, &p, false).unwrap().value - obj.eval(lambda, x, &m, false).unwrap().value) / (2.0 * h);
            assert!((fd - g).abs() <= 1e-6 * scale, "z{i}: {fd} vs {g}");
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let m = model(15);
        let settings = TrustRegionSettings::default();
        let start = make_initial_state(&m, &buckled_default(), &settings).unwrap();
        for kind in [TaskKind::PointTarget, TaskKind::TrajectoryTracking, TaskKind::ShapeFormation] {
            for i in [1, 2] {
                let spec = preset(kind, i, &m, &settings).unwrap();
                let obj = TaskObjective { model: &m, spec: &spec };
                fd_check(&obj, 0.3, &start.x, &start.z);
            }
        }
    }

    #[test]
    fn buckled_start_is_converged_and_bent() {
        let m = model(31);
        let settings = TrustRegionSettings::default();
        let start = make_initial_state(&m, &buckled_default(), &settings).unwrap();
        let cfg = Configuration::new(&m, start.z.clone(), start.x.clone()).unwrap();
        let parts = strip::energy_parts(&m, &cfg).unwrap();
        assert!(parts.bending > 0.0);
        let r = strip::residual(&m, &cfg).unwrap();
        assert!(r.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-9);
        let apex = node_position(&m, &cfg.q_b, &cfg.q_f, 15);
        assert!(apex[1] > 0.02, "arch height {}", apex[1]);
        assert!(mean_curvature(&m, &cfg).unwrap().abs() < 1e-6 * m.length());
        let again = make_initial_state(&m, &buckled_default(), &settings).unwrap();
        assert_eq!(start, again);
        let straight = make_initial_state(&m, &InitialShape::Straight, &settings).unwrap();
        let cfg = Configuration::new(&m, straight.z, straight.x).unwrap();
        assert!(strip::total_energy(&m, &cfg).unwrap() < 1e-30);
    }

    #[test]
    fn mirrored_shape_presets_share_the_terminal_pose() {
        let m = model(31);
        let settings = TrustRegionSettings::default();
        let up = preset(TaskKind::ShapeFormation, 0, &m, &settings).unwrap();
        let down = preset(TaskKind::ShapeFormation, 1, &m, &settings).unwrap();
        let (TaskTarget::Curvature { profile: a }, TaskTarget::Curvature { profile: b }) = (&up.target, &down.target) else {
            panic!("curvature targets expected");
        };
        for (x, y) in a.iter().zip(b) {
            assert!((x + y).abs() < 1e-6 * x.abs().max(1.0));
        }
        // half a revolution of total turning
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!((mean - PI / m.length()).abs() < 0.05 * mean, "{mean}");
        let straight = m.straight_configuration([0.0, 0.0]);
        let l = m.length();
        let dx = C_CHORD * l - (l - 0.5 * m.rest_edge_length());
        let p = posed_boundary(&m, &straight, dx, 0.0, PI);
        let q = posed_boundary(&m, &straight, dx, 0.0, -PI);
        for (x, y) in p.iter().zip(&q) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn presets_validate() {
        let m = model(31);
        let settings = TrustRegionSettings::default();
        for kind in [TaskKind::PointTarget, TaskKind::TrajectoryTracking, TaskKind::ShapeFormation] {
            for i in 0..PRESET_COUNT {
                let spec = preset(kind, i, &m, &settings).unwrap();
                spec.validate(&m).unwrap();
            }
        }
        assert!(preset(TaskKind::PointTarget, 4, &m, &settings).is_err());
    }
}
