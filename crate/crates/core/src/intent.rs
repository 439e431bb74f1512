//! Motion-intent feedback: arrow glyphs for the display and six-actuator
//! vibrotactile frames for the glove.
//!
//! The glove carries one actuator per signed axis of an orthogonal frame.
//! A direction activates the actuators on its hemisphere with the
//! half-wave rectified cosine `max(0, d·e)`, scaled by a gain that grows
//! with the angle between the current and the upcoming path direction.

use nalgebra::{Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::Pose;
use crate::plan::{PlanError, TrajectoryPlan};

/// Displacements shorter than this count as standing still.
pub const HOLD_THRESHOLD: f64 = 1e-4;

/// Actuator order on the wire and in `ActuatorFrame::intensities`.
pub const ACTUATOR_AXES: [&str; 6] = ["+x", "-x", "+y", "-y", "+z", "-z"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackParams {
    /// Gain for straight-ahead motion.
    pub g_min: f64,
    /// Lookahead horizon, s.
    pub horizon: f64,
    /// Arrow length for a unit direction, m.
    pub arrow_scale: f64,
    pub alignment: GloveAlignment,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        FeedbackParams {
            g_min: 0.2,
            horizon: 0.5,
            arrow_scale: 0.25,
            alignment: GloveAlignment::identity(),
        }
    }
}

/// Unit 3-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionVector(Unit<Vector3<f64>>);

impl DirectionVector {
    /// Normalizes `v`; `None` when it is shorter than `min_norm`.
    pub fn try_new(v: Vector3<f64>, min_norm: f64) -> Option<Self> {
        Unit::try_new(v, min_norm).map(DirectionVector)
    }

    pub fn new_normalize(v: Vector3<f64>) -> Self {
        DirectionVector(Unit::new_normalize(v))
    }

    pub fn x() -> Self {
        DirectionVector(Vector3::x_axis())
    }

    pub fn y() -> Self {
        DirectionVector(Vector3::y_axis())
    }

    pub fn z() -> Self {
        DirectionVector(Vector3::z_axis())
    }

    pub fn vector(&self) -> &Vector3<f64> {
        self.0.as_ref()
    }

    /// Angle to `other` in [0, π].
    pub fn angle_to(&self, other: &DirectionVector) -> f64 {
        let a = self.vector();
        let b = other.vector();
        a.cross(b).norm().atan2(a.dot(b))
    }
}

impl std::ops::Neg for DirectionVector {
    type Output = DirectionVector;
    fn neg(self) -> Self {
        DirectionVector(-self.0)
    }
}

/// Rotation from the world (robot) frame into the glove frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GloveAlignment {
    pub orientation: UnitQuaternion<f64>,
}

impl GloveAlignment {
    pub fn identity() -> Self {
        GloveAlignment {
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(orientation: UnitQuaternion<f64>) -> Self {
        GloveAlignment { orientation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorFrame {
    /// Intensities in [0, 1], ordered +X, −X, +Y, −Y, +Z, −Z.
    pub intensities: [f64; 6],
    pub stamp_ms: u64,
}

impl ActuatorFrame {
    pub fn silent(stamp_ms: u64) -> Self {
        ActuatorFrame {
            intensities: [0.0; 6],
            stamp_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrowColor {
    Green,
    Red,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrowGlyph {
    pub origin: [f64; 3],
    pub vector: [f64; 3],
    pub color: ArrowColor,
}

/// Planned direction now and one horizon later.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lookahead {
    Directions {
        now: DirectionVector,
        next: DirectionVector,
    },
    /// The plan is (about to be) standing still.
    Hold,
}

pub fn lookahead_directions(
    plan: &TrajectoryPlan,
    t: f64,
    horizon: f64,
) -> Result<Lookahead, PlanError> {
    assert!(horizon > 0.0, "horizon must be positive");
    let p0 = plan.sample(t)?;
    let p1 = plan.sample_clamped(t + horizon);
    let p2 = plan.sample_clamped(t + 2.0 * horizon);
    let now = DirectionVector::try_new(p1.position - p0.position, HOLD_THRESHOLD);
    let next = DirectionVector::try_new(p2.position - p1.position, HOLD_THRESHOLD);
    Ok(match (now, next) {
        (Some(now), Some(next)) => Lookahead::Directions { now, next },
        _ => Lookahead::Hold,
    })
}

/// Gain in [g_min, 1], linear in the angle between `now` and `next`.
pub fn change_gain(now: &DirectionVector, next: &DirectionVector, g_min: f64) -> f64 {
    let r = (now.angle_to(next) / std::f64::consts::PI).clamp(0.0, 1.0);
    // lerp form keeps both endpoints exact
    (1.0 - r) * g_min + r
}

pub fn align_to_glove(d: &DirectionVector, alignment: &GloveAlignment) -> DirectionVector {
    DirectionVector(alignment.orientation * d.0)
}

pub fn direction_to_actuators(d_glove: &DirectionVector, gain: f64, stamp_ms: u64) -> ActuatorFrame {
    debug_assert!(gain > 0.0 && gain <= 1.0);
    let v = d_glove.vector();
    let mut intensities = [0.0; 6];
    for axis in 0..3 {
        let c = v[axis];
        intensities[2 * axis] = gain * c.max(0.0);
        intensities[2 * axis + 1] = gain * (-c).max(0.0);
    }
    ActuatorFrame {
        intensities,
        stamp_ms,
    }
}

/// Green arrow along the immediate direction, red along the upcoming one,
/// both anchored at the tool. Empty while holding.
pub fn arrow_glyphs(ee: &Pose, lookahead: &Lookahead, scale: f64) -> Vec<ArrowGlyph> {
    match lookahead {
        Lookahead::Hold => Vec::new(),
        Lookahead::Directions { now, next } => {
            let origin: [f64; 3] = ee.position.into();
            let arrow = |d: &DirectionVector, color| ArrowGlyph {
                origin,
                vector: (d.vector() * scale).into(),
                color,
            };
            vec![arrow(now, ArrowColor::Green), arrow(next, ArrowColor::Red)]
        }
    }
}

/// Haptic frame for a lookahead; `None` while holding.
pub fn feedback_frame(
    lookahead: &Lookahead,
    params: &FeedbackParams,
    stamp_ms: u64,
) -> Option<ActuatorFrame> {
    match lookahead {
        Lookahead::Hold => None,
        Lookahead::Directions { now, next } => {
            let gain = change_gain(now, next, params.g_min);
            let d = align_to_glove(now, &params.alignment);
            Some(direction_to_actuators(&d, gain, stamp_ms))
        }
    }
}
