//! Fixed-timestep simulation loop.
//!
//! One loop owns the arm, the task and the control state. Inputs arrive
//! through an [`InputSource`]; every emitted frame goes to a [`FrameSink`]
//! and into the returned log. Time is simulated only: the log is a pure
//! function of the scenario, the session config and the input stream.

use std::collections::VecDeque;
use std::io::{self, Write};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::control::{
    apply_input, scripted_user, switch_mode, ControlMapping, ControlParams, ControlState,
    GeometricRecommender, InputSample, RecommendContext, Recommender, Scheme, UserView,
};
use crate::intent::{arrow_glyphs, feedback_frame, lookahead_directions, FeedbackParams, Lookahead};
use crate::kinematics::{fk_unchecked, ik_velocity_step, ArmModel, JointConfig, Pose, Twist};
use crate::metrics::{MetricsAccumulator, MetricsReport};
use crate::plan::{plan_pick_place, MotionLimits, PlanError, TrajectoryPlan};
use crate::protocol::{encode, FeedbackSource, Frame, FrameStamper, Message, WirePose, PROTOCOL_VERSION};
use crate::scene::{step_task, Phase, SceneConfig, TaskState};

/// Simulation timestep, s.
pub const TIMESTEP: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Everything that describes the world and its tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: ArmModel,
    pub scene: SceneConfig,
    pub home: JointConfig,
    pub motion: MotionLimits,
    pub control: ControlParams,
    pub feedback: FeedbackParams,
    /// Radius of the seeded random block offset, m.
    pub block_jitter: f64,
}

impl Scenario {
    pub fn default_scenario() -> Self {
        crate::config::ScenarioConfig::default()
            .build()
            .expect("default config is valid")
            .0
    }

    /// Scene after applying the seeded block jitter.
    pub fn scene_for_seed(&self, seed: u64) -> SceneConfig {
        let mut scene = self.scene.clone();
        if self.block_jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = self.block_jitter * rng.random::<f64>().sqrt();
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            let off = Vector2::new(r * a.cos(), r * a.sin());
            scene.block.position.x += off.x;
            scene.block.position.y += off.y;
        }
        scene
    }

    pub fn home_pose(&self) -> Pose {
        fk_unchecked(&self.model, &self.home)
    }

    pub fn plan(&self, scene: &SceneConfig) -> Result<TrajectoryPlan, PlanError> {
        plan_pick_place(scene, &self.model, &self.motion, &self.home_pose())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackChannels {
    pub visual: bool,
    pub haptic: bool,
}

impl FeedbackChannels {
    pub const BOTH: FeedbackChannels = FeedbackChannels {
        visual: true,
        haptic: true,
    };
    pub const NONE: FeedbackChannels = FeedbackChannels {
        visual: false,
        haptic: false,
    };
}

impl std::str::FromStr for FeedbackChannels {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "both" => FeedbackChannels::BOTH,
            "visual" => FeedbackChannels {
                visual: true,
                haptic: false,
            },
            "haptic" => FeedbackChannels {
                visual: false,
                haptic: true,
            },
            "none" => FeedbackChannels::NONE,
            other => return Err(format!("unknown feedback selection `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub session_id: String,
    pub dt: f64,
    pub haptic_rate_hz: u32,
    pub timeout_s: f64,
    pub autonomy: bool,
    pub scheme: Scheme,
    pub channels: FeedbackChannels,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            session_id: "default-42".into(),
            dt: TIMESTEP,
            haptic_rate_hz: 50,
            timeout_s: 120.0,
            autonomy: false,
            scheme: Scheme::Adaptive,
            channels: FeedbackChannels::BOTH,
            seed: 42,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::Config(m));
        if self.dt != TIMESTEP {
            return bad(format!("dt must be {TIMESTEP} s, got {}", self.dt));
        }
        if self.haptic_rate_hz == 0 || 100 % self.haptic_rate_hz != 0 {
            return bad(format!(
                "haptic rate {} Hz does not divide the {} Hz tick rate",
                self.haptic_rate_hz, 100
            ));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad("timeout must be positive".into());
        }
        if self.session_id.is_empty() {
            return bad("session id must not be empty".into());
        }
        Ok(())
    }

    fn ticks_per_haptic_frame(&self) -> u64 {
        u64::from(100 / self.haptic_rate_hz)
    }

    fn tick_ms(&self) -> u64 {
        (self.dt * 1000.0).round() as u64
    }
}

/// Supplies user input to the loop.
pub trait InputSource {
    /// Latest sample available at `now_ms`, if any arrived since the last poll.
    fn poll(&mut self, tick: u64, now_ms: u64) -> Option<InputSample>;
}

/// Latest axes win; button presses from superseded samples are kept so a
/// burst within one tick cannot swallow an edge.
pub fn fold_inputs(older: InputSample, newer: InputSample) -> InputSample {
    InputSample {
        mode_switch: older.mode_switch || newer.mode_switch,
        grip_toggle: older.grip_toggle || newer.grip_toggle,
        ..newer
    }
}

/// Time-ordered input queue. Samples due at the same tick are folded
/// with [`fold_inputs`].
#[derive(Debug, Clone, Default)]
pub struct QueuedInputs {
    queue: VecDeque<InputSample>,
}

impl QueuedInputs {
    pub fn new(samples: impl IntoIterator<Item = InputSample>) -> Self {
        let mut queue: Vec<_> = samples.into_iter().collect();
        queue.sort_by_key(|s| s.timestamp_ms);
        QueuedInputs {
            queue: queue.into(),
        }
    }

    /// The `Input` frames of a recorded session.
    pub fn from_log(log: &[Frame]) -> Self {
        QueuedInputs::new(log.iter().filter_map(|f| match &f.message {
            Message::Input { sample } => Some(*sample),
            _ => None,
        }))
    }

    pub fn push(&mut self, sample: InputSample) {
        self.queue.push_back(sample);
    }
}

impl InputSource for QueuedInputs {
    fn poll(&mut self, _tick: u64, now_ms: u64) -> Option<InputSample> {
        let mut latest: Option<InputSample> = None;
        while self.queue.front().is_some_and(|s| s.timestamp_ms <= now_ms) {
            let s = self.queue.pop_front().expect("front checked");
            latest = Some(match latest {
                Some(prev) => fold_inputs(prev, s),
                None => s,
            });
        }
        latest
    }
}

/// Receives frames as they are produced.
pub trait FrameSink {
    fn send(&mut self, frame: &Frame) -> io::Result<()>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl FrameSink for NullSink {
    fn send(&mut self, _frame: &Frame) -> io::Result<()> {
        Ok(())
    }
}

/// Writes encoded lines to any writer, flushing after each frame.
pub struct LineSink<W>(pub W);

impl<W: Write> FrameSink for LineSink<W> {
    fn send(&mut self, frame: &Frame) -> io::Result<()> {
        writeln!(self.0, "{}", encode(frame))?;
        self.0.flush()
    }
}

/// Who moves the arm in a user-driven session.
pub enum Operator<'a> {
    Scripted,
    External(&'a mut dyn InputSource),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub log: Vec<Frame>,
    pub report: MetricsReport,
    pub final_phase: Phase,
    pub block: Pose,
    pub reason: String,
}

struct Emitter<'s> {
    stamper: FrameStamper,
    sink: &'s mut dyn FrameSink,
    log: Vec<Frame>,
    metrics: MetricsAccumulator,
    broken: Option<String>,
}

impl Emitter<'_> {
    fn emit(&mut self, tick: u64, message: Message) {
        let frame = self.stamper.stamp(tick, message);
        self.metrics.observe(&frame);
        if self.broken.is_none() {
            if let Err(e) = self.sink.send(&frame) {
                self.broken = Some(format!("transport error: {e}"));
            }
        }
        self.log.push(frame);
    }
}

fn scene_state(
    q: &JointConfig,
    ee: &Pose,
    task: &TaskState,
    gripper_closed: bool,
) -> Message {
    Message::SceneState {
        joints: q.0,
        ee: WirePose::from(ee),
        block: WirePose::from(&task.block),
        phase: task.phase,
        grasped: task.grasped,
        gripper_closed,
    }
}

fn tracking_twist(from: &Pose, to: &Pose, dt: f64) -> Twist {
    Twist::new((to.position - from.position) / dt, from.rotation_error(to) / dt)
}

fn mode_switch_message(control: &ControlState) -> Message {
    Message::ModeSwitch {
        index: control.active_index() as u32,
        label: control.active().label.clone(),
    }
}

/// Runs one session to completion, timeout or transport failure.
pub fn run_session(
    scenario: &Scenario,
    cfg: &SessionConfig,
    mut operator: Operator<'_>,
    sink: &mut dyn FrameSink,
) -> Result<SessionOutcome, SessionError> {
    cfg.validate()?;
    let scene = scenario.scene_for_seed(cfg.seed);
    let plan = scenario.plan(&scene)?;
    let model = &scenario.model;
    let dt = cfg.dt;
    let tick_ms = cfg.tick_ms();
    let cadence = cfg.ticks_per_haptic_frame();
    let max_ticks = (cfg.timeout_s / dt).round() as u64;
    let source = if cfg.autonomy {
        FeedbackSource::Plan
    } else {
        FeedbackSource::Assist
    };
    let recommender = GeometricRecommender {
        horizon: scenario.feedback.horizon,
        characteristic_length: scenario.control.characteristic_length,
    };

    let mut q = scenario.home;
    let mut ee = fk_unchecked(model, &q);
    let mut task = TaskState::new(&scene);
    let mut gripper_closed = false;
    let mut held_axes = (0.0, 0.0);
    let mut plan_time = 0.0;

    let recommend = |ee: &Pose, task: &TaskState, t: f64| -> Option<Vec<ControlMapping>> {
        recommender
            .recommend(&RecommendContext {
                ee,
                task,
                scene: &scene,
                plan: &plan,
                t,
            })
            .ok()
    };
    let mut control = match cfg.scheme {
        Scheme::Cardinal => ControlState::cardinal(&scenario.control),
        Scheme::Adaptive => ControlState::new(
            Scheme::Adaptive,
            recommend(&ee, &task, 0.0).ok_or_else(|| {
                SessionError::Config("plan offers no direction to recommend".into())
            })?,
        ),
    };

    let grasp_close = plan
        .segment_for_phase(Phase::Grasp)
        .map_or(f64::INFINITY, |s| s.start_time);
    let release_open = plan
        .segment_for_phase(Phase::Release)
        .map_or(f64::INFINITY, |s| s.start_time);

    let mut out = Emitter {
        stamper: FrameStamper::new(cfg.session_id.clone()),
        sink,
        log: Vec::new(),
        metrics: MetricsAccumulator::default(),
        broken: None,
    };
    out.emit(
        0,
        Message::Hello {
            version: PROTOCOL_VERSION,
            scenario: scenario.name.clone(),
            scheme: cfg.scheme,
            autonomy: cfg.autonomy,
        },
    );

    let mut tick: u64 = 0;
    let reason = loop {
        if tick > 0 {
            let now_ms = tick * tick_ms;
            let next_q = if cfg.autonomy {
                plan_time = (tick as f64 * dt).min(plan.duration());
                gripper_closed = plan_time >= grasp_close && plan_time < release_open;
                let desired = plan.sample_clamped(plan_time);
                ik_velocity_step(model, &q, &tracking_twist(&ee, &desired, dt), dt).q
            } else {
                let sample = match &mut operator {
                    Operator::Scripted => Some(scripted_user(
                        &UserView {
                            ee: &ee,
                            block: &task.block,
                            plan: &plan,
                            t: plan_time,
                            control: &control,
                            phase: task.phase,
                            gripper_closed,
                            now_ms,
                            v_max: model.params().v_max,
                        },
                        &scenario.control,
                    )),
                    Operator::External(src) => src.poll(tick, now_ms),
                };
                if let Some(sample) = sample.filter(InputSample::is_valid) {
                    out.emit(tick, Message::Input { sample });
                    held_axes = (sample.axis1, sample.axis2);
                    if sample.mode_switch {
                        control = switch_mode(&control);
                        out.emit(tick, mode_switch_message(&control));
                    }
                    if sample.grip_toggle {
                        gripper_closed = !gripper_closed;
                    }
                }
                let input = InputSample::axes(held_axes.0, held_axes.1, now_ms);
                let mapping = control.active();
                if let Some(closed) = mapping.gripper_command(&input) {
                    gripper_closed = closed;
                }
                apply_input(model, &q, mapping, &input, dt).q
            };

            let next_ee = fk_unchecked(model, &next_q);
            let penetrates = task.grasped
                && scene.block_bottom(&task.block_if_tool_at(&next_ee)) < scene.table_height - 1e-6;
            if !penetrates {
                q = next_q;
                ee = next_ee;
            }

            let (next_task, events) = step_task(&task, &scene, &ee, gripper_closed);
            task = next_task;
            if !cfg.autonomy {
                let tracked = if task.phase.holds_block() {
                    task.block.position
                } else {
                    ee.position
                };
                plan_time = plan.reference_time(task.phase, &tracked);
                if cfg.scheme == Scheme::Adaptive {
                    if let Some(list) = recommend(&ee, &task, plan_time) {
                        control.refresh(list);
                    }
                }
            }
            out.emit(tick, scene_state(&q, &ee, &task, gripper_closed));
            for name in events {
                out.emit(
                    tick,
                    Message::TaskEvent {
                        name: name.to_string(),
                    },
                );
            }
        } else {
            out.emit(tick, scene_state(&q, &ee, &task, gripper_closed));
        }

        if tick.is_multiple_of(cadence) && (cfg.channels.visual || cfg.channels.haptic) {
            let look = lookahead_directions(&plan, plan_time.min(plan.duration()), scenario.feedback.horizon)
                .unwrap_or(Lookahead::Hold);
            if cfg.channels.haptic {
                if let Some(frame) = feedback_frame(&look, &scenario.feedback, tick * tick_ms) {
                    out.emit(tick, Message::Actuators { frame, source });
                }
            }
            if cfg.channels.visual && look != Lookahead::Hold {
                let glyphs = arrow_glyphs(&ee, &look, scenario.feedback.arrow_scale);
                out.emit(tick, Message::Arrows { glyphs, source });
            }
        }

        if let Some(reason) = out.broken.clone() {
            break reason;
        }
        if task.phase == Phase::Done {
            break "done".to_string();
        }
        if tick >= max_ticks {
            break "timeout".to_string();
        }
        tick += 1;
    };

    out.emit(
        tick,
        Message::Metrics {
            switch_count: control.switch_count(),
            elapsed_s: tick as f64 * dt,
        },
    );
    out.emit(tick, Message::Bye { reason: reason.clone() });

    let report = out.metrics.report().expect("session log starts with hello");
    Ok(SessionOutcome {
        log: out.log,
        report,
        final_phase: task.phase,
        block: task.block,
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = SessionConfig::default();
        c.validate().unwrap();
        c.haptic_rate_hz = 40;
        assert!(c.validate().is_err());
        c.haptic_rate_hz = 50;
        c.dt = 0.005;
        assert!(c.validate().is_err());
    }

    #[test]
    fn latest_input_wins() {
        let mut q = QueuedInputs::new([
            InputSample::axes(0.5, 0.0, 10),
            InputSample::axes(1.0, 0.0, 5),
            InputSample::axes(-1.0, 0.0, 30),
        ]);
        assert_eq!(q.poll(0, 0), None);
        assert_eq!(q.poll(1, 10).unwrap().axis1, 0.5);
        assert_eq!(q.poll(2, 20), None);
        assert_eq!(q.poll(3, 30).unwrap().axis1, -1.0);

        let press = InputSample {
            mode_switch: true,
            ..InputSample::idle(1)
        };
        let mut q = QueuedInputs::new([press, InputSample::axes(0.5, 0.0, 2)]);
        let s = q.poll(0, 10).unwrap();
        assert!(s.mode_switch);
        assert_eq!(s.axis1, 0.5);
    }

    #[test]
    fn feedback_selection_parses() {
        assert_eq!("none".parse::<FeedbackChannels>().unwrap(), FeedbackChannels::NONE);
        assert!("loud".parse::<FeedbackChannels>().is_err());
    }

    #[test]
    fn jitter_is_seeded() {
        let mut s = Scenario::default_scenario();
        assert_eq!(s.scene_for_seed(1), s.scene);
        s.block_jitter = 0.03;
        let a = s.scene_for_seed(7);
        assert_eq!(a, s.scene_for_seed(7));
        assert_ne!(a, s.scene_for_seed(8));
        assert!((a.block.position - s.scene.block.position).norm() <= 0.03);
    }
}
