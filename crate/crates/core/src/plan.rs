//! Reference pick-and-place trajectory: straight Cartesian segments, each
//! time-parameterized with a trapezoidal speed profile.

use nalgebra::Vector3;
use thiserror::Error;

use crate::kinematics::{ArmModel, Pose};
use crate::scene::{Phase, SceneConfig};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlanError {
    #[error("{what} at {distance:.3} m from the base is outside the reach of {reach:.3} m")]
    Unreachable {
        what: &'static str,
        distance: f64,
        reach: f64,
    },
    #[error("target area overlaps the arm base keep-out disc")]
    Infeasible,
    #[error("time {t} s outside the plan duration [0, {duration}]")]
    OutOfRange { t: f64, duration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionLimits {
    /// Peak Cartesian speed, m/s.
    pub v_max: f64,
    /// Cartesian acceleration, m/s².
    pub a_max: f64,
    pub grasp_dwell: f64,
    pub release_dwell: f64,
    /// Largest spacing between consecutive waypoints, m.
    pub max_waypoint_spacing: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        MotionLimits {
            v_max: 0.15,
            a_max: 0.5,
            grasp_dwell: 1.0,
            release_dwell: 1.0,
            max_waypoint_spacing: 0.05,
        }
    }
}

/// Rest-to-rest trapezoidal (or triangular, for short moves) speed profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidProfile {
    pub length: f64,
    pub accel: f64,
    pub peak_speed: f64,
    pub accel_time: f64,
    pub cruise_time: f64,
}

impl TrapezoidProfile {
    pub fn new(length: f64, v_max: f64, a_max: f64) -> Self {
        assert!(length >= 0.0 && v_max > 0.0 && a_max > 0.0);
        if length >= v_max * v_max / a_max {
            TrapezoidProfile {
                length,
                accel: a_max,
                peak_speed: v_max,
                accel_time: v_max / a_max,
                cruise_time: length / v_max - v_max / a_max,
            }
        } else {
            let peak = (length * a_max).sqrt();
            TrapezoidProfile {
                length,
                accel: a_max,
                peak_speed: peak,
                accel_time: peak / a_max,
                cruise_time: 0.0,
            }
        }
    }

    pub fn duration(&self) -> f64 {
        2.0 * self.accel_time + self.cruise_time
    }

    /// Distance covered after `t` seconds, clamped to the segment.
    pub fn distance_at(&self, t: f64) -> f64 {
        let ta = self.accel_time;
        let tc = self.cruise_time;
        let total = self.duration();
        if t <= 0.0 {
            0.0
        } else if t >= total {
            self.length
        } else if t < ta {
            0.5 * self.accel * t * t
        } else if t <= ta + tc {
            0.5 * self.accel * ta * ta + self.peak_speed * (t - ta)
        } else {
            let r = total - t;
            self.length - 0.5 * self.accel * r * r
        }
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        let ta = self.accel_time;
        let total = self.duration();
        if t <= 0.0 || t >= total {
            0.0
        } else if t < ta {
            self.accel * t
        } else if t <= ta + self.cruise_time {
            self.peak_speed
        } else {
            self.accel * (total - t)
        }
    }

    /// Inverse of `distance_at`.
    pub fn time_at_distance(&self, s: f64) -> f64 {
        let ta = self.accel_time;
        let s_acc = 0.5 * self.accel * ta * ta;
        if s <= 0.0 {
            0.0
        } else if s >= self.length {
            self.duration()
        } else if s < s_acc {
            (2.0 * s / self.accel).sqrt()
        } else if s <= self.length - s_acc {
            ta + (s - s_acc) / self.peak_speed
        } else {
            self.duration() - (2.0 * (self.length - s) / self.accel).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    Motion(TrapezoidProfile),
    Dwell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub phase: Phase,
    pub start_time: f64,
    pub duration: f64,
    pub from: Pose,
    pub to: Pose,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    pub fn is_motion(&self) -> bool {
        matches!(self.kind, SegmentKind::Motion(_))
    }

    /// Unit direction of travel for motion segments.
    pub fn direction(&self) -> Option<Vector3<f64>> {
        match self.kind {
            SegmentKind::Motion(_) => Some((self.to.position - self.from.position).normalize()),
            SegmentKind::Dwell => None,
        }
    }

    fn pose_at_fraction(&self, frac: f64) -> Pose {
        if frac <= 0.0 {
            return self.from;
        }
        if frac >= 1.0 {
            return self.to;
        }
        let position = self.from.position + (self.to.position - self.from.position) * frac;
        let orientation = self
            .from
            .orientation
            .try_slerp(&self.to.orientation, frac, 1e-12)
            .unwrap_or(self.from.orientation);
        Pose::new(position, orientation)
    }

    fn pose_at_local(&self, t: f64) -> Pose {
        match self.kind {
            SegmentKind::Dwell => self.from,
            SegmentKind::Motion(profile) => {
                if t >= self.duration {
                    return self.to;
                }
                self.pose_at_fraction(profile.distance_at(t) / profile.length)
            }
        }
    }

    /// Plan-local time at which the segment is closest to `p`.
    fn time_of_closest(&self, p: &Vector3<f64>) -> f64 {
        match self.kind {
            SegmentKind::Dwell => self.start_time,
            SegmentKind::Motion(profile) => {
                let dir = self.to.position - self.from.position;
                let s = (p - self.from.position).dot(&dir) / profile.length;
                self.start_time + profile.time_at_distance(s.clamp(0.0, profile.length))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub time: f64,
    pub pose: Pose,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    segments: Vec<Segment>,
    waypoints: Vec<Waypoint>,
    duration: f64,
}

impl TrajectoryPlan {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn start(&self) -> Pose {
        self.waypoints[0].pose
    }

    pub fn end(&self) -> Pose {
        self.waypoints[self.waypoints.len() - 1].pose
    }

    fn segment_index_at(&self, t: f64) -> usize {
        // first segment whose end is at or after t
        self.segments
            .partition_point(|s| s.end_time() < t)
            .min(self.segments.len() - 1)
    }

    pub fn segment_at(&self, t: f64) -> &Segment {
        &self.segments[self.segment_index_at(t)]
    }

    pub fn segment_for_phase(&self, phase: Phase) -> Option<&Segment> {
        self.segments.iter().find(|s| s.phase == phase)
    }

    /// First motion segment at or after `t`.
    pub fn motion_segment_from(&self, t: f64) -> Option<&Segment> {
        self.segments[self.segment_index_at(t)..]
            .iter()
            .find(|s| s.is_motion() && s.end_time() > t)
    }

    /// Plan time matching a tool position during `phase`: the closest point
    /// on the first motion segment belonging to `phase` or a later phase.
    pub fn reference_time(&self, phase: Phase, ee: &Vector3<f64>) -> f64 {
        self.segments
            .iter()
            .find(|s| s.is_motion() && s.phase >= phase)
            .map(|s| s.time_of_closest(ee))
            .unwrap_or(self.duration)
    }

    pub fn sample(&self, t: f64) -> Result<Pose, PlanError> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(PlanError::OutOfRange {
                t,
                duration: self.duration,
            });
        }
        if t == self.duration {
            return Ok(self.end());
        }
        let seg = self.segment_at(t);
        Ok(seg.pose_at_local(t - seg.start_time))
    }

    /// `sample` with `t` clamped into the plan.
    pub fn sample_clamped(&self, t: f64) -> Pose {
        self.sample(t.clamp(0.0, self.duration))
            .expect("clamped time is in range")
    }
}

pub fn sample_plan(plan: &TrajectoryPlan, t: f64) -> Result<Pose, PlanError> {
    plan.sample(t)
}

fn check_reach(
    model: &ArmModel,
    what: &'static str,
    p: &Vector3<f64>,
) -> Result<(), PlanError> {
    let distance = (p - model.base().translation.vector).norm();
    if distance > model.reach() {
        return Err(PlanError::Unreachable {
            what,
            distance,
            reach: model.reach(),
        });
    }
    Ok(())
}

/// Plans approach, descend, grasp, lift, transport, lower, release and
/// retreat from `start`, keeping the start orientation throughout.
pub fn plan_pick_place(
    scene: &SceneConfig,
    model: &ArmModel,
    limits: &MotionLimits,
    start: &Pose,
) -> Result<TrajectoryPlan, PlanError> {
    check_reach(model, "block", &scene.block.position)?;
    let place = scene.place_point();
    check_reach(model, "target", &place)?;
    let base_xy = model.base().translation.vector.xy();
    if (scene.target_center - base_xy).norm() < scene.keepout_radius + scene.target_radius {
        return Err(PlanError::Infeasible);
    }

    let mut grasp_lift = scene.grasp_point();
    grasp_lift.z = scene.transport_z();
    let stops: [(Phase, Option<Vector3<f64>>); 8] = [
        (Phase::ApproachPick, Some(scene.pre_grasp_point())),
        (Phase::Descend, Some(scene.grasp_point())),
        (Phase::Grasp, None),
        (Phase::Lift, Some(grasp_lift)),
        (Phase::Transport, Some(scene.above_target_point())),
        (Phase::Lower, Some(place)),
        (Phase::Release, None),
        (Phase::Retreat, Some(scene.retreat_point())),
    ];
    for (_, p) in &stops {
        if let Some(p) = p {
            check_reach(model, "waypoint", p)?;
        }
    }

    let orientation = start.orientation;
    let mut segments = Vec::with_capacity(stops.len());
    let mut here = *start;
    let mut t = 0.0;
    for (phase, stop) in stops {
        let seg = match stop {
            None => {
                let dwell = if phase == Phase::Grasp {
                    limits.grasp_dwell
                } else {
                    limits.release_dwell
                };
                if !(dwell > 0.0) {
                    continue;
                }
                Segment {
                    phase,
                    start_time: t,
                    duration: dwell,
                    from: here,
                    to: here,
                    kind: SegmentKind::Dwell,
                }
            }
            Some(p) => {
                let to = Pose::new(p, orientation);
                let length = (to.position - here.position).norm();
                if length < 1e-9 {
                    continue;
                }
                let profile = TrapezoidProfile::new(length, limits.v_max, limits.a_max);
                Segment {
                    phase,
                    start_time: t,
                    duration: profile.duration(),
                    from: here,
                    to,
                    kind: SegmentKind::Motion(profile),
                }
            }
        };
        t = seg.end_time();
        here = seg.to;
        segments.push(seg);
    }

    let waypoints = waypoints_for(&segments, start, limits.max_waypoint_spacing);
    Ok(TrajectoryPlan {
        duration: t,
        segments,
        waypoints,
    })
}

fn waypoints_for(segments: &[Segment], start: &Pose, spacing: f64) -> Vec<Waypoint> {
    let mut out = vec![Waypoint {
        time: 0.0,
        pose: *start,
        phase: segments.first().map_or(Phase::Done, |s| s.phase),
    }];
    for seg in segments {
        match seg.kind {
            SegmentKind::Dwell => out.push(Waypoint {
                time: seg.end_time(),
                pose: seg.to,
                phase: seg.phase,
            }),
            SegmentKind::Motion(profile) => {
                let n = (profile.length / spacing).ceil().max(1.0) as usize;
                for k in 1..=n {
                    let (time, pose) = if k == n {
                        (seg.end_time(), seg.to)
                    } else {
                        let s = profile.length * k as f64 / n as f64;
                        (
                            seg.start_time + profile.time_at_distance(s),
                            seg.pose_at_fraction(k as f64 / n as f64),
                        )
                    };
                    out.push(Waypoint {
                        time,
                        pose,
                        phase: seg.phase,
                    });
                }
            }
        }
    }
    out
}
