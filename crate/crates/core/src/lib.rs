//! Simulation core for a seven-joint collaborative arm doing pick-and-place
//! with visual and vibrotactile motion-intent feedback.
//!
//! The pieces, bottom up: [`kinematics`] (FK, Jacobian, damped least
//! squares), [`scene`] (table, block, task phases), [`plan`] (timed
//! Cartesian trajectory), [`intent`] (arrows and actuator frames),
//! [`control`] (input mappings and the adaptive recommender), [`session`]
//! (the fixed-timestep loop) and [`protocol`] (wire format and logs).

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod config;
pub mod control;
pub mod intent;
pub mod kinematics;
pub mod metrics;
pub mod plan;
pub mod protocol;
pub mod scenario;
pub mod scene;
pub mod session;

pub use config::{ConfigError, ScenarioConfig};
pub use control::{InputSample, Scheme};
pub use intent::{ActuatorFrame, DirectionVector};
pub use kinematics::{ArmModel, JointConfig, Pose, Twist};
pub use metrics::{compute_metrics, MetricsReport};
pub use protocol::{Frame, Message};
pub use scenario::{run_scenario, ScenarioError};
pub use scene::{Phase, SceneConfig};
pub use session::{run_session, Scenario, SessionConfig};
