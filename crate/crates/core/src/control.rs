//! Two-axis teleoperation: fixed cardinal mappings with explicit mode
//! switches, and adaptive mappings suggested by a recommender that combine
//! several Cartesian DoFs onto one input axis.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intent::{lookahead_directions, DirectionVector, Lookahead};
use crate::kinematics::{ik_velocity_step, ArmModel, IkStep, JointConfig, Pose, Twist};
use crate::plan::TrajectoryPlan;
use crate::scene::{Phase, SceneConfig, TaskState};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ControlError {
    #[error("plan has no direction left to recommend at t = {t} s")]
    DegeneratePlan { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Cardinal,
    Adaptive,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Cardinal => "cardinal",
            Scheme::Adaptive => "adaptive",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cardinal" => Ok(Scheme::Cardinal),
            "adaptive" => Ok(Scheme::Adaptive),
            other => Err(format!("unknown control scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    /// Length that converts angular rates into the twist norm, m.
    pub characteristic_length: f64,
    /// Scripted user switches when the active mapping achieves less than
    /// this fraction of the best available progress rate.
    pub switch_threshold: f64,
    /// Axis values the scripted user may choose from.
    pub input_grid: Vec<f64>,
    /// Scripted user stops steering inside this distance of its goal, m.
    pub deadband: f64,
    /// Scripted user operates the gripper inside this distance, m.
    pub grip_radius: f64,
    /// Pursuit horizon of the scripted user, s.
    pub pursuit_horizon: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            characteristic_length: 0.2,
            switch_threshold: 0.25,
            input_grid: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            deadband: 0.005,
            grip_radius: 0.008,
            pursuit_horizon: 0.5,
        }
    }
}

/// One sample of the two-axis input device.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InputSample {
    pub axis1: f64,
    pub axis2: f64,
    pub mode_switch: bool,
    pub grip_toggle: bool,
    pub timestamp_ms: u64,
}

impl InputSample {
    pub fn idle(timestamp_ms: u64) -> Self {
        InputSample {
            timestamp_ms,
            ..Default::default()
        }
    }

    pub fn axes(axis1: f64, axis2: f64, timestamp_ms: u64) -> Self {
        InputSample {
            axis1,
            axis2,
            timestamp_ms,
            ..Default::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        (-1.0..=1.0).contains(&self.axis1) && (-1.0..=1.0).contains(&self.axis2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MappingKind {
    /// One unit basis twist per input axis.
    Motion { axes: [Twist; 2] },
    /// Axis 1 closes (positive) or opens (negative) the gripper.
    Gripper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlMapping {
    pub label: String,
    pub kind: MappingKind,
}

impl ControlMapping {
    pub fn motion(label: &str, a: Twist, b: Twist) -> Self {
        ControlMapping {
            label: label.to_string(),
            kind: MappingKind::Motion { axes: [a, b] },
        }
    }

    pub fn basis(&self) -> Option<&[Twist; 2]> {
        match &self.kind {
            MappingKind::Motion { axes } => Some(axes),
            MappingKind::Gripper => None,
        }
    }

    /// `v_max · (axis1·b1 + axis2·b2)`, or zero for the gripper mapping.
    pub fn commanded_twist(&self, axis1: f64, axis2: f64, v_max: f64) -> Twist {
        match &self.kind {
            MappingKind::Motion { axes } => (axes[0] * axis1 + axes[1] * axis2) * v_max,
            MappingKind::Gripper => Twist::ZERO,
        }
    }

    /// Requested gripper state, if this input operates the gripper.
    pub fn gripper_command(&self, input: &InputSample) -> Option<bool> {
        match self.kind {
            MappingKind::Gripper if input.axis1 > 0.5 => Some(true),
            MappingKind::Gripper if input.axis1 < -0.5 => Some(false),
            _ => None,
        }
    }
}

/// Inner product on twists with angular parts scaled by `length`.
pub fn twist_dot(a: &Twist, b: &Twist, length: f64) -> f64 {
    a.linear.dot(&b.linear) + length * length * a.angular.dot(&b.angular)
}

pub fn twist_norm(t: &Twist, length: f64) -> f64 {
    twist_dot(t, t, length).sqrt()
}

/// X/Y, Z/yaw, pitch/roll and the gripper, in that order.
pub fn cardinal_mappings(length: f64) -> Vec<ControlMapping> {
    let lin = |v: Vector3<f64>| Twist::linear(v);
    let ang = |v: Vector3<f64>| Twist::angular(v / length);
    vec![
        ControlMapping::motion("translate X / translate Y", lin(Vector3::x()), lin(Vector3::y())),
        ControlMapping::motion("translate Z / yaw", lin(Vector3::z()), ang(Vector3::z())),
        ControlMapping::motion("pitch / roll", ang(Vector3::y()), ang(Vector3::x())),
        ControlMapping {
            label: "gripper".to_string(),
            kind: MappingKind::Gripper,
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlState {
    pub scheme: Scheme,
    mappings: Vec<ControlMapping>,
    active: usize,
    switch_count: u32,
}

impl ControlState {
    pub fn new(scheme: Scheme, mappings: Vec<ControlMapping>) -> Self {
        assert!(!mappings.is_empty(), "at least one mapping");
        ControlState {
            scheme,
            mappings,
            active: 0,
            switch_count: 0,
        }
    }

    pub fn cardinal(params: &ControlParams) -> Self {
        ControlState::new(
            Scheme::Cardinal,
            cardinal_mappings(params.characteristic_length),
        )
    }

    pub fn mappings(&self) -> &[ControlMapping] {
        &self.mappings
    }

    pub fn active_index(&self) -> usize {
        self.active
    }

    pub fn active(&self) -> &ControlMapping {
        &self.mappings[self.active]
    }

    pub fn switch_count(&self) -> u32 {
        self.switch_count
    }

    /// Replaces the suggestions, keeping the active slot.
    pub fn refresh(&mut self, mappings: Vec<ControlMapping>) {
        assert_eq!(mappings.len(), self.mappings.len(), "mapping count is fixed");
        self.mappings = mappings;
    }
}

pub fn switch_mode(state: &ControlState) -> ControlState {
    let mut next = state.clone();
    next.active = (state.active + 1) % state.mappings.len();
    next.switch_count += 1;
    next
}

pub fn apply_input(
    model: &ArmModel,
    q: &JointConfig,
    mapping: &ControlMapping,
    input: &InputSample,
    dt: f64,
) -> IkStep {
    let twist = mapping.commanded_twist(input.axis1, input.axis2, model.params().v_max);
    ik_velocity_step(model, q, &twist, dt)
}

/// Everything a recommender may look at.
#[derive(Debug, Clone, Copy)]
pub struct RecommendContext<'a> {
    pub ee: &'a Pose,
    pub task: &'a TaskState,
    pub scene: &'a SceneConfig,
    pub plan: &'a TrajectoryPlan,
    pub t: f64,
}

/// Source of ranked control mappings for the adaptive scheme.
pub trait Recommender {
    fn recommend(&self, ctx: &RecommendContext<'_>) -> Result<Vec<ControlMapping>, ControlError>;
}

/// Suggests the planned direction of travel on axis 1 and the upcoming
/// turn direction on axis 2, followed by the cardinal mappings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricRecommender {
    pub horizon: f64,
    pub characteristic_length: f64,
}

impl Default for GeometricRecommender {
    fn default() -> Self {
        GeometricRecommender {
            horizon: 0.5,
            characteristic_length: 0.2,
        }
    }
}

const DEGENERATE: f64 = 1e-3;

fn orthogonal_part(v: &Vector3<f64>, to: &Vector3<f64>) -> Vector3<f64> {
    v - to * v.dot(to)
}

/// Second basis direction for a path heading along `now`.
fn secondary_axis(now: &DirectionVector, next: &DirectionVector) -> Vector3<f64> {
    let n = now.vector();
    if let Some(turn) = DirectionVector::try_new(orthogonal_part(next.vector(), n), DEGENERATE) {
        return *turn.vector();
    }
    // straight (or reversing) path: vertical, or X when the path itself is vertical
    let up = orthogonal_part(&Vector3::z(), n);
    if up.norm() >= 0.1 {
        up.normalize()
    } else {
        orthogonal_part(&Vector3::x(), n).normalize()
    }
}

impl Recommender for GeometricRecommender {
    fn recommend(&self, ctx: &RecommendContext<'_>) -> Result<Vec<ControlMapping>, ControlError> {
        let plan = ctx.plan;
        let degenerate = ControlError::DegeneratePlan { t: ctx.t };
        if ctx.task.phase == Phase::Done || ctx.t >= plan.duration() {
            return Err(degenerate);
        }
        let t = ctx.t.max(0.0);
        let (now, next) = match lookahead_directions(plan, t, self.horizon) {
            Ok(Lookahead::Directions { now, next }) => (now, next),
            _ => {
                let dir = plan
                    .motion_segment_from(t)
                    .and_then(|s| s.direction())
                    .ok_or(degenerate)?;
                let d = DirectionVector::new_normalize(dir);
                (d, d)
            }
        };
        let mut out = Vec::with_capacity(5);
        out.push(ControlMapping::motion(
            "adaptive",
            Twist::linear(*now.vector()),
            Twist::linear(secondary_axis(&now, &next)),
        ));
        out.extend(cardinal_mappings(self.characteristic_length));
        Ok(out)
    }
}

pub fn recommend_mappings(
    ee: &Pose,
    task: &TaskState,
    scene: &SceneConfig,
    plan: &TrajectoryPlan,
    t: f64,
) -> Result<Vec<ControlMapping>, ControlError> {
    GeometricRecommender::default().recommend(&RecommendContext {
        ee,
        task,
        scene,
        plan,
        t,
    })
}

/// State the scripted user observes each tick.
#[derive(Debug, Clone, Copy)]
pub struct UserView<'a> {
    pub ee: &'a Pose,
    /// Current block pose.
    pub block: &'a Pose,
    pub plan: &'a TrajectoryPlan,
    /// Plan time matching the tool's progress.
    pub t: f64,
    pub control: &'a ControlState,
    pub phase: Phase,
    pub gripper_closed: bool,
    pub now_ms: u64,
    pub v_max: f64,
}

/// Best quantized input for `mapping` along `dir`: (progress m/s, axis1, axis2).
fn best_axes(mapping: &ControlMapping, dir: &Vector3<f64>, grid: &[f64], v_max: f64) -> (f64, f64, f64) {
    let mut candidates: Vec<(f64, f64)> = grid
        .iter()
        .flat_map(|&a| grid.iter().map(move |&b| (a, b)))
        .collect();
    // ties go to smaller total magnitude, then to axis 1, then to positive values
    candidates.sort_by(|x, y| {
        let key = |c: &(f64, f64)| (c.0.abs() + c.1.abs(), c.1.abs(), c.0 < 0.0, c.1 < 0.0);
        key(x).partial_cmp(&key(y)).expect("finite grid")
    });
    let mut best = (0.0, 0.0, 0.0);
    for (a, b) in candidates {
        let (twist, _) = mapping
            .commanded_twist(a, b, v_max)
            .clamped(v_max, f64::INFINITY);
        let progress = twist.linear.dot(dir);
        if progress > best.0 + 1e-12 {
            best = (progress, a, b);
        }
    }
    best
}

/// Deterministic greedy operator: steers the active mapping toward the
/// plan, switches modes when the active mapping falls behind, and works the
/// gripper at the grasp and place points.
pub fn scripted_user(view: &UserView<'_>, params: &ControlParams) -> InputSample {
    let idle = InputSample::idle(view.now_ms);
    let plan = view.plan;
    let ee = view.ee.position;

    // the plan puts the tool at the block center while carrying; steer the
    // block there instead, whatever offset it was picked up with
    let carry_offset = if view.phase.holds_block() {
        ee - view.block.position
    } else {
        Vector3::zeros()
    };
    let grip_at = |phase: Phase, p: &Vector3<f64>| {
        plan.segment_for_phase(phase)
            .is_some_and(|s| (p - s.to.position).norm() <= params.grip_radius)
    };
    let toggle = match view.phase {
        Phase::Descend => !view.gripper_closed && grip_at(Phase::Descend, &ee),
        Phase::Lower => view.gripper_closed && grip_at(Phase::Lower, &view.block.position),
        _ => false,
    };
    if toggle {
        return InputSample {
            grip_toggle: true,
            ..idle
        };
    }

    let Some(seg) = plan
        .segments()
        .iter()
        .find(|s| s.is_motion() && s.phase >= view.phase)
    else {
        return idle;
    };
    let goal_t = (view.t + params.pursuit_horizon).min(seg.end_time());
    let goal = plan.sample_clamped(goal_t).position + carry_offset;
    let delta = goal - ee;
    if delta.norm() < params.deadband {
        return idle;
    }
    let dir = delta.normalize();

    let grid = &params.input_grid;
    let (active_progress, a1, a2) = best_axes(view.control.active(), &dir, grid, view.v_max);
    let overall = view
        .control
        .mappings()
        .iter()
        .map(|m| best_axes(m, &dir, grid, view.v_max).0)
        .fold(0.0, f64::max);
    if overall > 0.0 && active_progress < params.switch_threshold * overall {
        return InputSample {
            mode_switch: true,
            ..idle
        };
    }
    InputSample::axes(a1, a2, view.now_ms)
}
