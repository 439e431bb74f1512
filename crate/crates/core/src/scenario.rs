//! Headless scenario runs: config file in, log and report files out.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::control::Scheme;
use crate::kinematics::{solve_ik, KinematicsError, Pose};
use crate::metrics::MetricsReport;
use crate::plan::PlanError;
use crate::protocol::{record, Frame, ProtocolError, LOG_EXTENSION};
use crate::scene::SceneConfig;
use crate::session::{
    run_session, FeedbackChannels, NullSink, Operator, Scenario, SessionConfig, SessionError,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario is not reachable: {0}")]
    Unreachable(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 2,
            ScenarioError::Unreachable(_) => 3,
            ScenarioError::Protocol(_) | ScenarioError::Io(_) => 1,
        }
    }
}

impl From<SessionError> for ScenarioError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Config(m) => ScenarioError::Config(ConfigError::Invalid(m)),
            SessionError::Plan(p) => p.into(),
        }
    }
}

impl From<PlanError> for ScenarioError {
    fn from(e: PlanError) -> Self {
        ScenarioError::Unreachable(e.to_string())
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scheme: Option<Scheme>,
    pub autonomy: Option<bool>,
    pub channels: Option<FeedbackChannels>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut SessionConfig) {
        if let Some(s) = self.scheme {
            cfg.scheme = s;
        }
        if let Some(a) = self.autonomy {
            cfg.autonomy = a;
        }
        if let Some(c) = self.channels {
            cfg.channels = c;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
    }
}

/// Loads a config and applies overrides. Session ids are derived from the
/// scenario name, scheme and seed so repeated runs produce identical logs.
pub fn prepare(
    config_path: impl AsRef<Path>,
    overrides: &Overrides,
) -> Result<(Scenario, SessionConfig), ScenarioError> {
    let (scenario, mut cfg) = ScenarioConfig::load(config_path)?.build()?;
    overrides.apply(&mut cfg);
    cfg.session_id = session_id(&scenario, &cfg);
    cfg.validate()?;
    Ok((scenario, cfg))
}

pub fn session_id(scenario: &Scenario, cfg: &SessionConfig) -> String {
    let mode = if cfg.autonomy {
        "autonomy".to_string()
    } else {
        cfg.scheme.to_string()
    };
    format!("{}-{}-{}", scenario.name, mode, cfg.seed)
}

/// Plans the task and solves IK for every key pose, chaining seeds from home.
pub fn check_reachable(scenario: &Scenario, scene: &SceneConfig) -> Result<(), ScenarioError> {
    let plan = scenario.plan(scene)?;
    let orientation = plan.start().orientation;
    let keys = [
        ("pre-grasp point", scene.pre_grasp_point()),
        ("grasp point", scene.grasp_point()),
        ("point above target", scene.above_target_point()),
        ("place point", scene.place_point()),
        ("retreat point", scene.retreat_point()),
    ];
    let mut seed = scenario.home;
    for (what, p) in keys {
        let target = Pose::new(p, orientation);
        match solve_ik(&scenario.model, &target, &seed) {
            Ok(sol) => seed = sol.q,
            Err(KinematicsError::NotConverged { best }) => {
                return Err(ScenarioError::Unreachable(format!(
                    "IK did not converge for the {what} (residual {:.2e} m)",
                    best.position_error
                )))
            }
            Err(e) => return Err(ScenarioError::Unreachable(format!("{what}: {e}"))),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub report: MetricsReport,
    pub log: Vec<Frame>,
    pub log_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
}

/// Runs one headless session (scripted user or autonomy) in memory.
pub fn run_prepared(scenario: &Scenario, cfg: &SessionConfig) -> Result<ScenarioRun, ScenarioError> {
    check_reachable(scenario, &scenario.scene_for_seed(cfg.seed))?;
    let outcome = run_session(scenario, cfg, Operator::Scripted, &mut NullSink)?;
    Ok(ScenarioRun {
        report: outcome.report,
        log: outcome.log,
        log_path: None,
        report_path: None,
    })
}

/// Runs a scenario from a config file. With `out_dir`, writes
/// `<session>.cobotlog` and `<session>.report.json` there.
pub fn run_scenario(
    config_path: impl AsRef<Path>,
    overrides: &Overrides,
    out_dir: Option<&Path>,
) -> Result<ScenarioRun, ScenarioError> {
    let (scenario, cfg) = prepare(config_path, overrides)?;
    let mut run = run_prepared(&scenario, &cfg)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let log_path = dir.join(format!("{}.{LOG_EXTENSION}", cfg.session_id));
        let report_path = dir.join(format!("{}.report.json", cfg.session_id));
        record(&run.log, &log_path)?;
        let json = serde_json::to_string_pretty(&run.report).expect("report serializes");
        std::fs::write(&report_path, json + "\n")?;
        run.log_path = Some(log_path);
        run.report_path = Some(report_path);
    }
    Ok(run)
}
