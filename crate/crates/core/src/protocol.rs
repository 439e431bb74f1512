//! Line-delimited JSON session protocol and `.cobotlog` record/replay.
//!
//! One frame per line:
//!
//! ```text
//! {"session":"s1","seq":3,"tick":1,"type":"scene_state",...}
//! ```
//!
//! `seq` increases by one per frame within a session; `tick` is the
//! simulation tick the frame belongs to and never decreases. Floats are
//! written in shortest round-trip form, so re-encoding a decoded canonical
//! line reproduces it byte for byte.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{InputSample, Scheme};
use crate::intent::{ActuatorFrame, ArrowGlyph};
use crate::kinematics::{Pose, DOF};
use crate::scene::Phase;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_PORT: u16 = 7471;
pub const LOG_EXTENSION: &str = "cobotlog";

/// Message type tags, in declaration order.
pub const TAGS: [&str; 9] = [
    "hello",
    "scene_state",
    "actuators",
    "arrows",
    "input",
    "mode_switch",
    "task_event",
    "metrics",
    "bye",
];

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: protocol version {found}, expected {PROTOCOL_VERSION}")]
    Version { line: usize, found: u32 },
    #[error("line {line}: unknown message type `{tag}`")]
    UnknownTag { line: usize, tag: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ProtocolError {
    fn at_line(self, n: usize) -> Self {
        match self {
            ProtocolError::Parse { reason, .. } => ProtocolError::Parse { line: n, reason },
            ProtocolError::Version { found, .. } => ProtocolError::Version { line: n, found },
            ProtocolError::UnknownTag { tag, .. } => ProtocolError::UnknownTag { line: n, tag },
            other => other,
        }
    }
}

/// Pose as `{"position":[x,y,z],"orientation":[w,x,y,z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WirePose {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

impl From<&Pose> for WirePose {
    fn from(p: &Pose) -> Self {
        let q = p.orientation.quaternion();
        WirePose {
            position: p.position.into(),
            orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

impl From<&WirePose> for Pose {
    fn from(w: &WirePose) -> Self {
        let [qw, qx, qy, qz] = w.orientation;
        Pose::new(
            Vector3::from(w.position),
            UnitQuaternion::new_unchecked(Quaternion::new(qw, qx, qy, qz)),
        )
    }
}

/// Where the communicated intent comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSource {
    /// The autonomous plan the arm is executing.
    Plan,
    /// The plan position matched to the user's progress.
    Assist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        version: u32,
        scenario: String,
        scheme: Scheme,
        autonomy: bool,
    },
    SceneState {
        joints: [f64; DOF],
        ee: WirePose,
        block: WirePose,
        phase: Phase,
        grasped: bool,
        gripper_closed: bool,
    },
    Actuators {
        frame: ActuatorFrame,
        source: FeedbackSource,
    },
    Arrows {
        glyphs: Vec<ArrowGlyph>,
        source: FeedbackSource,
    },
    Input {
        sample: InputSample,
    },
    ModeSwitch {
        index: u32,
        label: String,
    },
    TaskEvent {
        name: String,
    },
    Metrics {
        switch_count: u32,
        elapsed_s: f64,
    },
    Bye {
        reason: String,
    },
}

impl Message {
    pub fn tag(&self) -> &'static str {
        match self {
            Message::Hello { .. } => TAGS[0],
            Message::SceneState { .. } => TAGS[1],
            Message::Actuators { .. } => TAGS[2],
            Message::Arrows { .. } => TAGS[3],
            Message::Input { .. } => TAGS[4],
            Message::ModeSwitch { .. } => TAGS[5],
            Message::TaskEvent { .. } => TAGS[6],
            Message::Metrics { .. } => TAGS[7],
            Message::Bye { .. } => TAGS[8],
        }
    }
}

/// A message with its session envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub session: String,
    pub seq: u64,
    pub tick: u64,
    #[serde(flatten)]
    pub message: Message,
}

pub fn encode(frame: &Frame) -> String {
    // serde_json escapes control characters, so the line has no raw newlines
    serde_json::to_string(frame).expect("frames always serialize")
}

pub fn decode(line: &str) -> Result<Frame, ProtocolError> {
    let parse = |reason: String| ProtocolError::Parse { line: 0, reason };
    let value: serde_json::Value =
        serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| parse(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse("expected a JSON object".into()))?;
    let tag = obj
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| parse("missing message type".into()))?;
    if !TAGS.contains(&tag) {
        return Err(ProtocolError::UnknownTag {
            line: 0,
            tag: tag.to_string(),
        });
    }
    if tag == "hello" {
        if let Some(v) = obj.get("version").and_then(|v| v.as_u64()) {
            if v != u64::from(PROTOCOL_VERSION) {
                return Err(ProtocolError::Version {
                    line: 0,
                    found: u32::try_from(v).unwrap_or(u32::MAX),
                });
            }
        }
    }
    serde_json::from_value(value).map_err(|e| parse(e.to_string()))
}

/// Builds envelopes for one session with a strictly increasing `seq`.
#[derive(Debug, Clone)]
pub struct FrameStamper {
    session: String,
    seq: u64,
}

impl FrameStamper {
    pub fn new(session: impl Into<String>) -> Self {
        FrameStamper {
            session: session.into(),
            seq: 0,
        }
    }

    pub fn stamp(&mut self, tick: u64, message: Message) -> Frame {
        let frame = Frame {
            session: self.session.clone(),
            seq: self.seq,
            tick,
            message,
        };
        self.seq += 1;
        frame
    }
}

/// Writes one encoded frame per line.
pub fn record(log: &[Frame], path: impl AsRef<Path>) -> Result<(), ProtocolError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_log(log, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_log(log: &[Frame], w: &mut impl Write) -> io::Result<()> {
    for frame in log {
        writeln!(w, "{}", encode(frame))?;
    }
    Ok(())
}

/// Reads a whole log, failing on the first bad line.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<Frame>, ProtocolError> {
    replay(path, 0.0)?.collect()
}

/// Streams the frames of a log in order.
///
/// With a positive `speed` the stream sleeps so that a frame at tick `k` is
/// released `k · dt · speed` seconds after the first; `0` means no pacing.
/// Iteration stops after the first error.
pub fn replay(path: impl AsRef<Path>, speed: f64) -> Result<Replay<BufReader<File>>, ProtocolError> {
    Ok(Replay::new(BufReader::new(File::open(path)?), speed))
}

pub struct Replay<R> {
    reader: R,
    speed: f64,
    dt: f64,
    line_no: usize,
    started: Option<(Instant, u64)>,
    failed: bool,
}

impl<R: BufRead> Replay<R> {
    pub fn new(reader: R, speed: f64) -> Self {
        Replay {
            reader,
            speed,
            dt: crate::session::TIMESTEP,
            line_no: 0,
            started: None,
            failed: false,
        }
    }

    fn pace(&mut self, tick: u64) {
        if self.speed <= 0.0 {
            return;
        }
        let (t0, tick0) = *self.started.get_or_insert((Instant::now(), tick));
        let due = t0
            + Duration::from_secs_f64(tick.saturating_sub(tick0) as f64 * self.dt * self.speed);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
}

impl<R: BufRead> Iterator for Replay<R> {
    type Item = Result<Frame, ProtocolError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let mut line = String::new();
        loop {
            line.clear();
            self.line_no += 1;
            match self.reader.read_line(&mut line) {
                Ok(0) => return None,
                Ok(_) if line.trim().is_empty() => continue,
                Ok(_) => break,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
        }
        match decode(&line) {
            Ok(frame) => {
                self.pace(frame.tick);
                Some(Ok(frame))
            }
            Err(e) => {
                self.failed = true;
                Some(Err(e.at_line(self.line_no)))
            }
        }
    }
}
