//! Session report, folded from the frame stream.
//!
//! The live session and [`compute_metrics`] run the same fold, so a report
//! recomputed from a `.cobotlog` matches the one produced while running.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::Scheme;
use crate::protocol::{read_log, Frame, Message, ProtocolError};
use crate::scene::Phase;
use crate::session::TIMESTEP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scheme: Scheme,
    pub autonomy: bool,
    pub mode_switches: u32,
    /// Simulated seconds until the task finished, or until the session ended.
    pub completion_time_s: f64,
    pub path_length_m: f64,
    /// Per actuator, fraction of emitted frames with nonzero intensity.
    pub duty_cycle: [f64; 6],
    pub success: bool,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    header: Option<(Scheme, bool)>,
    frames: usize,
    mode_switches: u32,
    last_ee: Option<Vector3<f64>>,
    path_length: f64,
    actuator_frames: u64,
    lit: [u64; 6],
    done_tick: Option<u64>,
    last_tick: u64,
}

impl MetricsAccumulator {
    pub fn observe(&mut self, frame: &Frame) {
        self.frames += 1;
        self.last_tick = self.last_tick.max(frame.tick);
        match &frame.message {
            Message::Hello {
                scheme, autonomy, ..
            } if self.header.is_none() => self.header = Some((*scheme, *autonomy)),
            Message::ModeSwitch { .. } => self.mode_switches += 1,
            Message::SceneState { ee, phase, .. } => {
                let p = Vector3::from(ee.position);
                if let Some(prev) = self.last_ee {
                    self.path_length += (p - prev).norm();
                }
                self.last_ee = Some(p);
                if *phase == Phase::Done && self.done_tick.is_none() {
                    self.done_tick = Some(frame.tick);
                }
            }
            Message::Actuators { frame: f, .. } => {
                self.actuator_frames += 1;
                for (n, v) in self.lit.iter_mut().zip(f.intensities) {
                    if v > 0.0 {
                        *n += 1;
                    }
                }
            }
            _ => {}
        }
    }

    /// `None` until a Hello has been observed.
    pub fn report(&self) -> Option<MetricsReport> {
        let (scheme, autonomy) = self.header?;
        let duty_cycle = if self.actuator_frames == 0 {
            [0.0; 6]
        } else {
            self.lit.map(|n| n as f64 / self.actuator_frames as f64)
        };
        let end_tick = self.done_tick.unwrap_or(self.last_tick);
        Some(MetricsReport {
            scheme,
            autonomy,
            mode_switches: self.mode_switches,
            completion_time_s: end_tick as f64 * TIMESTEP,
            path_length_m: self.path_length,
            duty_cycle,
            success: self.done_tick.is_some(),
        })
    }
}

/// Report for an in-memory log. The first frame must be a Hello.
pub fn compute_metrics_from_frames(frames: &[Frame]) -> Result<MetricsReport, ProtocolError> {
    match frames.first().map(|f| &f.message) {
        Some(Message::Hello { .. }) => {}
        Some(other) => {
            return Err(ProtocolError::Parse {
                line: 1,
                reason: format!("log must start with hello, found {}", other.tag()),
            })
        }
        None => {
            return Err(ProtocolError::Parse {
                line: 1,
                reason: "empty log: missing hello".into(),
            })
        }
    }
    let mut acc = MetricsAccumulator::default();
    frames.iter().for_each(|f| acc.observe(f));
    Ok(acc.report().expect("hello observed"))
}

pub fn compute_metrics(path: impl AsRef<Path>) -> Result<MetricsReport, ProtocolError> {
    compute_metrics_from_frames(&read_log(path)?)
}
