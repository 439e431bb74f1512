//! Table scene and the pick-and-place task state machine.

use nalgebra::{Isometry3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Pose;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    Invalid(String),
}

/// Axis-aligned rectangle of the table top, in world x/y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableBounds {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl TableBounds {
    pub fn contains_disc(&self, center: &Vector2<f64>, radius: f64) -> bool {
        center.x - radius >= self.min.x
            && center.x + radius <= self.max.x
            && center.y - radius >= self.min.y
            && center.y + radius <= self.max.y
    }
}

/// Tolerances and heights for the task, all in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskTolerances {
    /// Height of the pre-grasp and retreat points above the block top / place point.
    pub clearance: f64,
    /// Transport height above the table surface.
    pub transport_height: f64,
    pub grasp: f64,
    pub approach: f64,
    /// Block bottom height above the table that counts as lifted.
    pub lift_detect: f64,
}

impl Default for TaskTolerances {
    fn default() -> Self {
        TaskTolerances {
            clearance: 0.10,
            transport_height: 0.25,
            grasp: 0.015,
            approach: 0.02,
            lift_detect: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub table_height: f64,
    pub bounds: TableBounds,
    /// Block center pose.
    pub block: Pose,
    pub block_side: f64,
    /// Target disc center on the table surface (x, y).
    pub target_center: Vector2<f64>,
    /// Placement tolerance; also the drawn radius of the target area.
    pub target_radius: f64,
    /// Radius of the disc around the arm base no target may overlap.
    pub keepout_radius: f64,
    pub tolerances: TaskTolerances,
}

impl SceneConfig {
    pub fn default_scene() -> Self {
        SceneConfig {
            table_height: 0.0,
            bounds: TableBounds {
                min: Vector2::new(-0.3, -0.7),
                max: Vector2::new(0.9, 0.7),
            },
            block: Pose::from_position(Vector3::new(0.45, 0.20, 0.02)),
            block_side: 0.04,
            target_center: Vector2::new(0.40, -0.25),
            target_radius: 0.02,
            keepout_radius: 0.15,
            tolerances: TaskTolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::Invalid(m.to_string()));
        if !(self.block_side > 0.0) || !(self.target_radius > 0.0) {
            return bad("block side and target radius must be positive");
        }
        if (self.block_bottom(&self.block) - self.table_height).abs() > 1e-9 {
            return bad("block must rest on the table");
        }
        if !self
            .bounds
            .contains_disc(&self.target_center, self.target_radius)
        {
            return bad("target area must lie within the table bounds");
        }
        let block_xy = self.block.position.xy();
        if !self.bounds.contains_disc(&block_xy, 0.0) {
            return bad("block must lie on the table");
        }
        let half_diag = self.block_side * std::f64::consts::FRAC_1_SQRT_2;
        if (block_xy - self.target_center).norm() <= self.target_radius + half_diag {
            return bad("block and target area overlap");
        }
        Ok(())
    }

    /// Tool point while holding the block.
    pub fn grasp_point(&self) -> Vector3<f64> {
        self.block.position
    }

    pub fn pre_grasp_point(&self) -> Vector3<f64> {
        let mut p = self.block.position;
        p.z += self.block_side / 2.0 + self.tolerances.clearance;
        p
    }

    pub fn transport_z(&self) -> f64 {
        self.table_height + self.tolerances.transport_height
    }

    /// Tool point when the block sits centered on the target.
    pub fn place_point(&self) -> Vector3<f64> {
        Vector3::new(
            self.target_center.x,
            self.target_center.y,
            self.table_height + self.block_side / 2.0,
        )
    }

    pub fn above_target_point(&self) -> Vector3<f64> {
        Vector3::new(self.target_center.x, self.target_center.y, self.transport_z())
    }

    pub fn retreat_point(&self) -> Vector3<f64> {
        let mut p = self.place_point();
        p.z += self.tolerances.clearance;
        p
    }

    /// Lowest corner of a cube with this scene's side at `pose`.
    pub fn block_bottom(&self, pose: &Pose) -> f64 {
        let h = self.block_side / 2.0;
        let mut lowest = f64::INFINITY;
        for sx in [-h, h] {
            for sy in [-h, h] {
                for sz in [-h, h] {
                    let c = pose.orientation * Vector3::new(sx, sy, sz);
                    lowest = lowest.min(pose.position.z + c.z);
                }
            }
        }
        lowest
    }
}

/// Task phases in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    ApproachPick,
    Descend,
    Grasp,
    Lift,
    Transport,
    Lower,
    Release,
    Retreat,
    Done,
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::ApproachPick,
        Phase::Descend,
        Phase::Grasp,
        Phase::Lift,
        Phase::Transport,
        Phase::Lower,
        Phase::Release,
        Phase::Retreat,
        Phase::Done,
    ];

    pub fn next(self) -> Option<Phase> {
        let i = Phase::ALL.iter().position(|p| *p == self)?;
        Phase::ALL.get(i + 1).copied()
    }

    pub fn holds_block(self) -> bool {
        matches!(
            self,
            Phase::Grasp | Phase::Lift | Phase::Transport | Phase::Lower
        )
    }

    /// Name of the event emitted on entering this phase.
    pub fn entry_event(self) -> &'static str {
        match self {
            Phase::ApproachPick => "started",
            Phase::Descend => "approached",
            Phase::Grasp => "grasped",
            Phase::Lift => "lifted",
            Phase::Transport => "transport",
            Phase::Lower => "over_target",
            Phase::Release => "released",
            Phase::Retreat => "placed",
            Phase::Done => "done",
        }
    }
}

/// Task progress plus the block it manipulates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskState {
    pub phase: Phase,
    pub grasped: bool,
    pub block: Pose,
    /// Block pose relative to the tool, captured at grasp time.
    grasp_offset: Option<Isometry3<f64>>,
}

impl TaskState {
    pub fn new(scene: &SceneConfig) -> Self {
        TaskState {
            phase: Phase::ApproachPick,
            grasped: false,
            block: scene.block,
            grasp_offset: None,
        }
    }

    pub fn grasp_offset(&self) -> Option<&Isometry3<f64>> {
        self.grasp_offset.as_ref()
    }

    /// Block pose if the tool moved to `ee` while holding it.
    pub fn block_if_tool_at(&self, ee: &Pose) -> Pose {
        match &self.grasp_offset {
            Some(off) if self.grasped => Pose::from_isometry(&(ee.isometry() * off)),
            _ => self.block,
        }
    }
}

fn horizontal_distance(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a.xy() - b.xy()).norm()
}

/// Advances at most one phase. Carries the block with the tool while grasped.
pub fn step_task(
    state: &TaskState,
    scene: &SceneConfig,
    ee: &Pose,
    gripper_closed: bool,
) -> (TaskState, Vec<&'static str>) {
    let tol = &scene.tolerances;
    let mut next = *state;
    next.block = state.block_if_tool_at(ee);
    let p = &ee.position;

    let advance = match state.phase {
        Phase::ApproachPick => (p - scene.pre_grasp_point()).norm() <= tol.approach,
        Phase::Descend => gripper_closed && (p - scene.grasp_point()).norm() <= tol.grasp,
        Phase::Grasp => scene.block_bottom(&next.block) >= scene.table_height + tol.lift_detect,
        Phase::Lift => p.z >= scene.transport_z() - tol.approach,
        Phase::Transport => horizontal_distance(p, &scene.above_target_point()) <= tol.approach,
        Phase::Lower => {
            !gripper_closed && (next.block.position - scene.place_point()).norm() <= tol.grasp
        }
        Phase::Release => {
            !gripper_closed
                && (next.block.position.xy() - scene.target_center).norm() <= scene.target_radius
        }
        Phase::Retreat => (p - scene.retreat_point()).norm() <= tol.approach,
        Phase::Done => false,
    };
    if !advance {
        return (next, Vec::new());
    }
    let phase = state.phase.next().expect("Done never advances");
    next.phase = phase;
    match phase {
        Phase::Grasp => {
            next.grasped = true;
            next.grasp_offset = Some(ee.isometry().inverse() * state.block.isometry());
        }
        Phase::Release => {
            next.grasped = false;
            next.grasp_offset = None;
            // set the block down where it was let go
            let mut resting = next.block;
            resting.position.z += scene.table_height - scene.block_bottom(&next.block);
            next.block = resting;
        }
        _ => {}
    }
    (next, vec![phase.entry_event()])
}
