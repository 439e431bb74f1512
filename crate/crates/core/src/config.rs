//! Scenario configuration file (TOML, schema version 1).
//!
//! Every section and key is optional; missing values take the defaults of
//! the desk-scale reference scenario. Unknown keys are rejected.

use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, Unit, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlParams, Scheme};
use crate::intent::{FeedbackParams, GloveAlignment};
use crate::kinematics::{ArmModel, DlsParams, JointConfig, JointLimits, JointSpec, Pose, DOF};
use crate::plan::MotionLimits;
use crate::scene::{SceneConfig, TableBounds, TaskTolerances};
use crate::session::{FeedbackChannels, Scenario, SessionConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Home posture: elbow bent, tool pointing straight down.
pub const DEFAULT_HOME: [f64; DOF] = [
    0.0,
    0.06,
    0.0,
    1.56,
    0.0,
    std::f64::consts::PI - 1.62,
    0.0,
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub arm: ArmSection,
    #[serde(default)]
    pub scene: SceneSection,
    #[serde(default)]
    pub motion: MotionSection,
    #[serde(default)]
    pub session: SessionSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub feedback: FeedbackSection,
}

fn default_name() -> String {
    "default".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointSection {
    pub axis: [f64; 3],
    pub offset: [f64; 3],
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmSection {
    pub damping: f64,
    pub v_max: f64,
    pub w_max: f64,
    pub base_position: [f64; 3],
    /// Quaternion as [w, x, y, z].
    pub base_orientation: [f64; 4],
    pub home: [f64; DOF],
    pub joints: Vec<JointSection>,
}

impl Default for JointSection {
    fn default() -> Self {
        JointSection {
            axis: [0.0, 0.0, 1.0],
            offset: [0.0, 0.0, 0.1],
            limits: [-2.6, 2.6],
        }
    }
}

impl Default for ArmSection {
    fn default() -> Self {
        let m = ArmModel::default_arm();
        let p = m.params();
        ArmSection {
            damping: p.damping,
            v_max: p.v_max,
            w_max: p.w_max,
            base_position: [0.0; 3],
            base_orientation: [1.0, 0.0, 0.0, 0.0],
            home: DEFAULT_HOME,
            joints: m
                .joints()
                .iter()
                .map(|j| JointSection {
                    axis: j.axis.into_inner().into(),
                    offset: j.offset.into(),
                    limits: [j.limits.lo, j.limits.hi],
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub table_height: f64,
    pub table_min: [f64; 2],
    pub table_max: [f64; 2],
    pub block_center: [f64; 3],
    pub block_side: f64,
    /// Radius of the seeded random offset applied to the block, m.
    pub block_jitter: f64,
    pub target_center: [f64; 2],
    pub target_radius: f64,
    pub keepout_radius: f64,
    pub clearance: f64,
    pub transport_height: f64,
    pub grasp_tolerance: f64,
    pub approach_tolerance: f64,
    pub lift_detect: f64,
}

impl Default for SceneSection {
    fn default() -> Self {
        let s = SceneConfig::default_scene();
        let t = s.tolerances;
        SceneSection {
            table_height: s.table_height,
            table_min: s.bounds.min.into(),
            table_max: s.bounds.max.into(),
            block_center: s.block.position.into(),
            block_side: s.block_side,
            block_jitter: 0.0,
            target_center: s.target_center.into(),
            target_radius: s.target_radius,
            keepout_radius: s.keepout_radius,
            clearance: t.clearance,
            transport_height: t.transport_height,
            grasp_tolerance: t.grasp,
            approach_tolerance: t.approach,
            lift_detect: t.lift_detect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSection {
    pub v_max: f64,
    pub a_max: f64,
    pub grasp_dwell: f64,
    pub release_dwell: f64,
    pub max_waypoint_spacing: f64,
}

impl Default for MotionSection {
    fn default() -> Self {
        let m = MotionLimits::default();
        MotionSection {
            v_max: m.v_max,
            a_max: m.a_max,
            grasp_dwell: m.grasp_dwell,
            release_dwell: m.release_dwell,
            max_waypoint_spacing: m.max_waypoint_spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    pub dt: f64,
    pub haptic_rate_hz: u32,
    pub timeout_s: f64,
    pub autonomy: bool,
    pub scheme: Scheme,
    pub seed: u64,
}

impl Default for SessionSection {
    fn default() -> Self {
        SessionSection {
            dt: crate::session::TIMESTEP,
            haptic_rate_hz: 50,
            timeout_s: 120.0,
            autonomy: false,
            scheme: Scheme::Adaptive,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub characteristic_length: f64,
    pub switch_threshold: f64,
    pub input_grid: Vec<f64>,
    pub deadband: f64,
    pub grip_radius: f64,
    pub pursuit_horizon: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        let c = ControlParams::default();
        ControlSection {
            characteristic_length: c.characteristic_length,
            switch_threshold: c.switch_threshold,
            input_grid: c.input_grid,
            deadband: c.deadband,
            grip_radius: c.grip_radius,
            pursuit_horizon: c.pursuit_horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackSection {
    pub visual: bool,
    pub haptic: bool,
    pub g_min: f64,
    pub horizon: f64,
    pub arrow_scale: f64,
    /// World-to-glove rotation as [w, x, y, z].
    pub glove_alignment: [f64; 4],
}

impl Default for FeedbackSection {
    fn default() -> Self {
        let f = FeedbackParams::default();
        FeedbackSection {
            visual: true,
            haptic: true,
            g_min: f.g_min,
            horizon: f.horizon,
            arrow_scale: f.arrow_scale,
            glove_alignment: [1.0, 0.0, 0.0, 0.0],
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: default_name(),
            arm: ArmSection::default(),
            scene: SceneSection::default(),
            motion: MotionSection::default(),
            session: SessionSection::default(),
            control: ControlSection::default(),
            feedback: FeedbackSection::default(),
        }
    }
}

fn unit_quaternion(q: [f64; 4], what: &str) -> Result<UnitQuaternion<f64>, ConfigError> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    if !(raw.norm() > 1e-9) {
        return Err(invalid(format!("{what} quaternion has zero norm")));
    }
    Ok(UnitQuaternion::from_quaternion(raw))
}

fn positive(v: f64, what: &str) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{what} must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn arm_model(&self) -> Result<ArmModel, ConfigError> {
        let a = &self.arm;
        if a.joints.len() != DOF {
            return Err(invalid(format!(
                "arm needs exactly {DOF} joints, found {}",
                a.joints.len()
            )));
        }
        let mut joints = [JointSpec {
            axis: Vector3::z_axis(),
            offset: Vector3::zeros(),
            limits: JointLimits::symmetric(0.0),
        }; DOF];
        for (i, (spec, js)) in joints.iter_mut().zip(&a.joints).enumerate() {
            spec.axis = Unit::try_new(Vector3::from(js.axis), 1e-9)
                .ok_or_else(|| invalid(format!("joint {} axis has zero length", i + 1)))?;
            spec.offset = Vector3::from(js.offset);
            spec.limits = JointLimits {
                lo: js.limits[0],
                hi: js.limits[1],
            };
        }
        let base = Isometry3::from_parts(
            Translation3::from(Vector3::from(a.base_position)),
            unit_quaternion(a.base_orientation, "base")?,
        );
        let params = DlsParams {
            damping: a.damping,
            v_max: a.v_max,
            w_max: a.w_max,
        };
        ArmModel::new(joints, base, params).map_err(|e| invalid(e.to_string()))
    }

    pub fn scene(&self) -> Result<SceneConfig, ConfigError> {
        let s = &self.scene;
        if !(s.block_jitter >= 0.0) {
            return Err(invalid("block_jitter must be non-negative"));
        }
        let scene = SceneConfig {
            table_height: s.table_height,
            bounds: TableBounds {
                min: Vector2::from(s.table_min),
                max: Vector2::from(s.table_max),
            },
            block: Pose::from_position(Vector3::from(s.block_center)),
            block_side: s.block_side,
            target_center: Vector2::from(s.target_center),
            target_radius: s.target_radius,
            keepout_radius: s.keepout_radius,
            tolerances: TaskTolerances {
                clearance: positive(s.clearance, "clearance")?,
                transport_height: positive(s.transport_height, "transport_height")?,
                grasp: positive(s.grasp_tolerance, "grasp_tolerance")?,
                approach: positive(s.approach_tolerance, "approach_tolerance")?,
                lift_detect: positive(s.lift_detect, "lift_detect")?,
            },
        };
        scene.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(scene)
    }

    pub fn motion(&self) -> Result<MotionLimits, ConfigError> {
        let m = &self.motion;
        if !(m.grasp_dwell >= 0.0 && m.release_dwell >= 0.0) {
            return Err(invalid("dwell times must be non-negative"));
        }
        Ok(MotionLimits {
            v_max: positive(m.v_max, "motion.v_max")?,
            a_max: positive(m.a_max, "motion.a_max")?,
            grasp_dwell: m.grasp_dwell,
            release_dwell: m.release_dwell,
            max_waypoint_spacing: positive(m.max_waypoint_spacing, "max_waypoint_spacing")?,
        })
    }

    pub fn control(&self) -> Result<ControlParams, ConfigError> {
        let c = &self.control;
        if c.input_grid.is_empty() || c.input_grid.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(invalid("input_grid values must lie in [-1, 1]"));
        }
        if !(0.0..=1.0).contains(&c.switch_threshold) {
            return Err(invalid("switch_threshold must lie in [0, 1]"));
        }
        Ok(ControlParams {
            characteristic_length: positive(c.characteristic_length, "characteristic_length")?,
            switch_threshold: c.switch_threshold,
            input_grid: c.input_grid.clone(),
            deadband: positive(c.deadband, "deadband")?,
            grip_radius: positive(c.grip_radius, "grip_radius")?,
            pursuit_horizon: positive(c.pursuit_horizon, "pursuit_horizon")?,
        })
    }

    pub fn feedback(&self) -> Result<FeedbackParams, ConfigError> {
        let f = &self.feedback;
        if !(f.g_min > 0.0 && f.g_min <= 1.0) {
            return Err(invalid("g_min must lie in (0, 1]"));
        }
        Ok(FeedbackParams {
            g_min: f.g_min,
            horizon: positive(f.horizon, "horizon")?,
            arrow_scale: positive(f.arrow_scale, "arrow_scale")?,
            alignment: GloveAlignment::new(unit_quaternion(f.glove_alignment, "glove_alignment")?),
        })
    }

    /// Validates every section and assembles the runnable pieces.
    pub fn build(&self) -> Result<(Scenario, SessionConfig), ConfigError> {
        let model = self.arm_model()?;
        let home = JointConfig(self.arm.home);
        model
            .check_limits(&home)
            .map_err(|e| invalid(format!("home posture: {e}")))?;
        let scenario = Scenario {
            name: self.name.clone(),
            model,
            scene: self.scene()?,
            home,
            motion: self.motion()?,
            control: self.control()?,
            feedback: self.feedback()?,
            block_jitter: self.scene.block_jitter,
        };
        let s = &self.session;
        let session = SessionConfig {
            session_id: format!("{}-{}", self.name, s.seed),
            dt: s.dt,
            haptic_rate_hz: s.haptic_rate_hz,
            timeout_s: s.timeout_s,
            autonomy: s.autonomy,
            scheme: s.scheme,
            channels: FeedbackChannels {
                visual: self.feedback.visual,
                haptic: self.feedback.haptic,
            },
            seed: s.seed,
        };
        session.validate().map_err(|e| invalid(e.to_string()))?;
        Ok((scenario, session))
    }
}
