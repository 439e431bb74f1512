//! Batch evaluation over independent inputs.
//!
//! With the `parallel` feature, [`Execution::Parallel`] fans out over the
//! rayon pool; without it, both variants run sequentially. Results are
//! always returned in input order, so the choice never changes output.

use crate::intent::{direction_to_actuators, ActuatorFrame, DirectionVector};
use crate::kinematics::{
    forward_kinematics, jacobian, solve_ik, ArmModel, IkSolution, JacobianView, JointConfig,
    KinematicsError, Pose,
};
use crate::scenario::{run_prepared, ScenarioError, ScenarioRun};
use crate::session::{Scenario, SessionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether `Parallel` actually uses threads in this build.
    pub const PARALLEL_AVAILABLE: bool = cfg!(feature = "parallel");

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }
}

pub fn batch_forward_kinematics(
    exec: Execution,
    model: &ArmModel,
    qs: &[JointConfig],
) -> Vec<Result<Pose, KinematicsError>> {
    exec.map(qs, |q| forward_kinematics(model, q))
}

pub fn batch_jacobians(
    exec: Execution,
    model: &ArmModel,
    qs: &[JointConfig],
) -> Vec<Result<JacobianView, KinematicsError>> {
    exec.map(qs, |q| jacobian(model, q))
}

/// Solves each `(target, seed)` pair independently.
pub fn batch_solve_ik(
    exec: Execution,
    model: &ArmModel,
    problems: &[(Pose, JointConfig)],
) -> Vec<Result<IkSolution, KinematicsError>> {
    exec.map(problems, |(target, seed)| solve_ik(model, target, seed))
}

pub fn batch_actuator_frames(
    exec: Execution,
    inputs: &[(DirectionVector, f64)],
) -> Vec<ActuatorFrame> {
    exec.map(inputs, |(d, gain)| direction_to_actuators(d, *gain, 0))
}

/// Runs one headless session per config.
pub fn batch_sessions(
    exec: Execution,
    scenario: &Scenario,
    configs: &[SessionConfig],
) -> Vec<Result<ScenarioRun, ScenarioError>> {
    exec.map(configs, |cfg| run_prepared(scenario, cfg))
}
