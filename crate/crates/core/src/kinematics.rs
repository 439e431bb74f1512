//! Seven-joint revolute arm: forward kinematics, geometric Jacobian and
//! damped-least-squares inverse kinematics.
//!
//! Every function here is a pure function of its arguments.

use nalgebra::{
    Cholesky, Isometry3, Matrix6, SMatrix, Translation3, Unit, UnitQuaternion, Vector3, Vector6,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of joints in the arm.
pub const DOF: usize = 7;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum KinematicsError {
    #[error("joint {joint} at {value} rad is outside [{lo}, {hi}]")]
    LimitViolation {
        joint: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("target at {distance:.4} m from the base exceeds the reach of {reach:.4} m")]
    Unreachable { distance: f64, reach: f64 },
    #[error("ik did not converge after {} iterations (position error {:.3e} m)", .best.iterations, .best.position_error)]
    NotConverged { best: IkSolution },
    #[error("invalid arm model: {0}")]
    InvalidModel(String),
}

/// Seven joint angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub [f64; DOF]);

impl JointConfig {
    pub const ZERO: JointConfig = JointConfig([0.0; DOF]);

    pub fn angles(&self) -> &[f64; DOF] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }
}

impl From<[f64; DOF]> for JointConfig {
    fn from(a: [f64; DOF]) -> Self {
        JointConfig(a)
    }
}

/// Closed joint interval in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub lo: f64,
    pub hi: f64,
}

impl JointLimits {
    pub fn symmetric(bound: f64) -> Self {
        JointLimits {
            lo: -bound,
            hi: bound,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// One revolute joint followed by its rigid link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSpec {
    /// Rotation axis in the parent frame.
    pub axis: Unit<Vector3<f64>>,
    /// Translation from this joint to the next joint (or the tool point), in
    /// the joint's rotated frame.
    pub offset: Vector3<f64>,
    pub limits: JointLimits,
}

/// Velocity clamps and damping used by the differential IK.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlsParams {
    pub damping: f64,
    /// Linear speed clamp, m/s.
    pub v_max: f64,
    /// Angular speed clamp, rad/s.
    pub w_max: f64,
}

impl Default for DlsParams {
    fn default() -> Self {
        DlsParams {
            damping: 0.05,
            v_max: 0.15,
            w_max: 0.8,
        }
    }
}

/// Geometry of the arm plus its mounting pose in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    joints: [JointSpec; DOF],
    base: Isometry3<f64>,
    params: DlsParams,
    reach: f64,
}

impl ArmModel {
    pub fn new(
        joints: [JointSpec; DOF],
        base: Isometry3<f64>,
        params: DlsParams,
    ) -> Result<Self, KinematicsError> {
        for (i, j) in joints.iter().enumerate() {
            let len = j.offset.norm();
            if !(len > 0.0) || !len.is_finite() {
                return Err(KinematicsError::InvalidModel(format!(
                    "link {} has non-positive length",
                    i + 1
                )));
            }
            if !(j.limits.lo < j.limits.hi) {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint {} has an empty limit interval",
                    i + 1
                )));
            }
        }
        if !(params.damping > 0.0 && params.v_max > 0.0 && params.w_max > 0.0) {
            return Err(KinematicsError::InvalidModel(
                "damping and velocity clamps must be positive".into(),
            ));
        }
        let reach = joints.iter().map(|j| j.offset.norm()).sum();
        Ok(ArmModel {
            joints,
            base,
            params,
            reach,
        })
    }

    /// Alternating Z/Y/Z/Y/Z/Y/Z layout stretched along +Z at zero angles,
    /// link lengths summing to 0.985 m, ±2.6 rad limits.
    pub fn default_arm() -> Self {
        const LINKS: [f64; DOF] = [0.175, 0.175, 0.160, 0.160, 0.120, 0.120, 0.075];
        let joints = std::array::from_fn(|i| JointSpec {
            axis: if i % 2 == 0 {
                Vector3::z_axis()
            } else {
                Vector3::y_axis()
            },
            offset: Vector3::new(0.0, 0.0, LINKS[i]),
            limits: JointLimits::symmetric(2.6),
        });
        ArmModel::new(joints, Isometry3::identity(), DlsParams::default())
            .expect("default arm is valid")
    }

    pub fn joints(&self) -> &[JointSpec; DOF] {
        &self.joints
    }

    pub fn base(&self) -> &Isometry3<f64> {
        &self.base
    }

    pub fn params(&self) -> &DlsParams {
        &self.params
    }

    /// Sum of link lengths.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn check_limits(&self, q: &JointConfig) -> Result<(), KinematicsError> {
        for (i, (&v, j)) in q.0.iter().zip(self.joints.iter()).enumerate() {
            if !v.is_finite() || !j.limits.contains(v) {
                return Err(KinematicsError::LimitViolation {
                    joint: i,
                    value: v,
                    lo: j.limits.lo,
                    hi: j.limits.hi,
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &JointConfig) -> (JointConfig, bool) {
        let mut out = *q;
        let mut clamped = false;
        for (v, j) in out.0.iter_mut().zip(self.joints.iter()) {
            let c = j.limits.clamp(*v);
            if c != *v {
                clamped = true;
                *v = c;
            }
        }
        (out, clamped)
    }

    /// World frames of every joint (origin at the joint, before its link
    /// offset) and the tool frame.
    fn frames(&self, q: &JointConfig) -> ([Isometry3<f64>; DOF], Isometry3<f64>) {
        let mut frame = self.base;
        let mut joint_frames = [Isometry3::identity(); DOF];
        for (i, j) in self.joints.iter().enumerate() {
            frame *= UnitQuaternion::from_axis_angle(&j.axis, q.0[i]);
            joint_frames[i] = frame;
            frame *= Translation3::from(j.offset);
        }
        (joint_frames, frame)
    }
}

/// Tool pose: position in meters and a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose {
            position,
            orientation,
        }
    }

    pub fn from_position(position: Vector3<f64>) -> Self {
        Pose::new(position, UnitQuaternion::identity())
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Pose::new(iso.translation.vector, iso.rotation)
    }

    /// Rotation vector taking `self.orientation` onto `target.orientation`,
    /// expressed in the world frame.
    pub fn rotation_error(&self, target: &Pose) -> Vector3<f64> {
        (target.orientation * self.orientation.inverse()).scaled_axis()
    }
}

/// Spatial velocity of the tool point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub const ZERO: Twist = Twist {
        linear: Vector3::new(0.0, 0.0, 0.0),
        angular: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Twist { linear, angular }
    }

    pub fn linear(v: Vector3<f64>) -> Self {
        Twist::new(v, Vector3::zeros())
    }

    pub fn angular(w: Vector3<f64>) -> Self {
        Twist::new(Vector3::zeros(), w)
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn is_zero(&self) -> bool {
        self.linear == Vector3::zeros() && self.angular == Vector3::zeros()
    }

    /// Scales the linear and angular parts independently so that neither
    /// exceeds its clamp. Returns the clamped twist and whether it changed.
    pub fn clamped(&self, v_max: f64, w_max: f64) -> (Twist, bool) {
        let mut out = *self;
        let mut hit = false;
        let ln = self.linear.norm();
        if ln > v_max {
            out.linear *= v_max / ln;
            hit = true;
        }
        let an = self.angular.norm();
        if an > w_max {
            out.angular *= w_max / an;
            hit = true;
        }
        (out, hit)
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist::new(self.linear + rhs.linear, self.angular + rhs.angular)
    }
}

impl std::ops::Mul<f64> for Twist {
    type Output = Twist;
    fn mul(self, s: f64) -> Twist {
        Twist::new(self.linear * s, self.angular * s)
    }
}

/// 6×7 geometric Jacobian; rows are linear x,y,z then angular x,y,z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianView(pub SMatrix<f64, 6, DOF>);

impl JacobianView {
    pub fn matrix(&self) -> &SMatrix<f64, 6, DOF> {
        &self.0
    }

    pub fn column(&self, j: usize) -> Vector6<f64> {
        self.0.column(j).into_owned()
    }

    /// Yoshikawa manipulability, sqrt(det(J Jᵀ)).
    pub fn manipulability(&self) -> f64 {
        (self.0 * self.0.transpose()).determinant().max(0.0).sqrt()
    }
}

pub fn forward_kinematics(model: &ArmModel, q: &JointConfig) -> Result<Pose, KinematicsError> {
    model.check_limits(q)?;
    Ok(fk_unchecked(model, q))
}

pub(crate) fn fk_unchecked(model: &ArmModel, q: &JointConfig) -> Pose {
    let (_, tool) = model.frames(q);
    Pose::from_isometry(&tool)
}

pub fn jacobian(model: &ArmModel, q: &JointConfig) -> Result<JacobianView, KinematicsError> {
    model.check_limits(q)?;
    Ok(jacobian_unchecked(model, q).0)
}

fn jacobian_unchecked(model: &ArmModel, q: &JointConfig) -> (JacobianView, Pose) {
    let (frames, tool) = model.frames(q);
    let p_ee = tool.translation.vector;
    let mut m = SMatrix::<f64, 6, DOF>::zeros();
    for (j, (frame, spec)) in frames.iter().zip(model.joints.iter()).enumerate() {
        let axis = frame.rotation * spec.axis.into_inner();
        let lin = axis.cross(&(p_ee - frame.translation.vector));
        m.fixed_view_mut::<3, 1>(0, j).copy_from(&lin);
        m.fixed_view_mut::<3, 1>(3, j).copy_from(&axis);
    }
    (JacobianView(m), Pose::from_isometry(&tool))
}

/// Result of one differential IK step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkStep {
    pub q: JointConfig,
    /// The requested twist exceeded a velocity clamp.
    pub twist_saturated: bool,
    /// At least one joint was clamped to its limit.
    pub limit_saturated: bool,
}

impl IkStep {
    pub fn saturated(&self) -> bool {
        self.twist_saturated || self.limit_saturated
    }
}

/// Joint velocity q̇ = Jᵀ (J Jᵀ + λ² I)⁻¹ v.
pub fn dls_joint_velocity(j: &JacobianView, twist: &Twist, damping: f64) -> SMatrix<f64, DOF, 1> {
    let jm = j.matrix();
    let a: Matrix6<f64> = jm * jm.transpose() + Matrix6::identity() * (damping * damping);
    let y = Cholesky::new(a)
        .expect("damped normal matrix is positive definite")
        .solve(&twist.as_vector());
    jm.transpose() * y
}

/// Integrates one damped-least-squares velocity step of length `dt`.
///
/// The twist is clamped to the model's `v_max`/`w_max` and the result to the
/// joint limits; both are reported on the returned step.
pub fn ik_velocity_step(model: &ArmModel, q: &JointConfig, desired: &Twist, dt: f64) -> IkStep {
    debug_assert!(dt > 0.0 && dt <= 0.1, "dt {dt} outside (0, 0.1]");
    let (twist, twist_saturated) = desired.clamped(model.params.v_max, model.params.w_max);
    if twist.is_zero() {
        return IkStep {
            q: *q,
            twist_saturated,
            limit_saturated: false,
        };
    }
    let (jac, _) = jacobian_unchecked(model, q);
    let qdot = dls_joint_velocity(&jac, &twist, model.params.damping);
    let mut next = *q;
    for (v, d) in next.0.iter_mut().zip(qdot.iter()) {
        *v += dt * d;
    }
    let (next, limit_saturated) = model.clamp(&next);
    IkStep {
        q: next,
        twist_saturated,
        limit_saturated,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    pub max_iterations: usize,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    /// Integration step handed to `ik_velocity_step` per iteration.
    pub step: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions {
            max_iterations: 500,
            position_tolerance: 1e-4,
            orientation_tolerance: 1e-3,
            step: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub q: JointConfig,
    pub iterations: usize,
    pub position_error: f64,
    pub orientation_error: f64,
}

pub fn solve_ik(
    model: &ArmModel,
    target: &Pose,
    seed: &JointConfig,
) -> Result<IkSolution, KinematicsError> {
    solve_ik_with(model, target, seed, &IkOptions::default())
}

/// Repeats `ik_velocity_step` toward `target` until both pose errors are
/// inside tolerance.
pub fn solve_ik_with(
    model: &ArmModel,
    target: &Pose,
    seed: &JointConfig,
    opts: &IkOptions,
) -> Result<IkSolution, KinematicsError> {
    model.check_limits(seed)?;
    let distance = (target.position - model.base.translation.vector).norm();
    if distance > model.reach {
        return Err(KinematicsError::Unreachable {
            distance,
            reach: model.reach,
        });
    }

    let mut q = *seed;
    let mut best: Option<IkSolution> = None;
    for iteration in 0..=opts.max_iterations {
        let pose = fk_unchecked(model, &q);
        let dp = target.position - pose.position;
        let dr = pose.rotation_error(target);
        let current = IkSolution {
            q,
            iterations: iteration,
            position_error: dp.norm(),
            orientation_error: dr.norm(),
        };
        if current.position_error < opts.position_tolerance
            && current.orientation_error < opts.orientation_tolerance
        {
            return Ok(current);
        }
        if best.is_none_or(|b| current.position_error < b.position_error) {
            best = Some(current);
        }
        if iteration == opts.max_iterations {
            break;
        }
        let twist = Twist::new(dp / opts.step, dr / opts.step);
        q = ik_velocity_step(model, &q, &twist, opts.step).q;
    }
    Err(KinematicsError::NotConverged {
        best: best.expect("at least one iterate"),
    })
}
