//! Serial-arm kinematics: chain description, forward kinematics, numerical
//! Jacobian and a damped-least-squares IK solver.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::solve_spd;
use crate::math::{Pose, Quat, Vec3};

/// Tolerance for unit-length checks on axes and quaternions.
const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("joint config has {got} values, chain has {expected} joints")]
    LengthMismatch { expected: usize, got: usize },
    #[error("ik did not converge: position error {position_error:.6} m, orientation error {orientation_error:.6} rad")]
    NotConverged { position_error: f64, orientation_error: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("chain has no joints")]
    Empty,
    #[error("joint `{0}` is not revolute; only revolute joints are supported")]
    UnsupportedJoint(String),
    #[error("joint `{name}` axis has norm {norm}, expected 1")]
    AxisNotUnit { name: String, norm: f64 },
    #[error("joint `{0}` has limits with min >= max")]
    BadLimits(String),
    #[error("{radii} link radii for {joints} joints")]
    RadiiCount { radii: usize, joints: usize },
    #[error("link radius {0} is not positive")]
    BadRadius(f64),
    #[error("non-finite or zero-norm quaternion in chain")]
    BadPose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    #[default]
    Revolute,
    /// Accepted by the parser only so it can be rejected with a clear error.
    Prismatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub axis: Vec3,
    /// Fixed transform from the parent joint frame.
    pub origin: Pose,
    /// `[min, max]` in radians.
    pub limits: [f64; 2],
    #[serde(default, skip_serializing_if = "is_revolute")]
    pub kind: JointKind,
}

fn is_revolute(k: &JointKind) -> bool {
    *k == JointKind::Revolute
}

fn default_camera_mount() -> Pose {
    Pose::from_translation(0.0, 0.0, -0.05)
}

/// An ordered chain of revolute joints with capsule link geometry.
///
/// Link `i` spans from the origin of joint frame `i` to the origin of joint
/// frame `i + 1`; the last link ends at the tool point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub name: String,
    pub joints: Vec<JointSpec>,
    pub link_radii: Vec<f64>,
    pub ee_offset: Pose,
    #[serde(default = "default_camera_mount")]
    pub camera_mount: Pose,
}

/// Joint values in radians, one per chain joint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn new(values: Vec<f64>) -> Self {
        JointConfig(values)
    }

    pub fn zeros(n: usize) -> Self {
        JointConfig(alloc::vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Largest per-joint absolute difference.
    pub fn max_abs_diff(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }

    pub fn distance(&self, other: &JointConfig) -> f64 {
        libm::sqrt(self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    pub fn lerp(&self, other: &JointConfig, t: f64) -> JointConfig {
        JointConfig(self.0.iter().zip(&other.0).map(|(a, b)| a + (b - a) * t).collect())
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        JointConfig(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardKinematics {
    pub ee: Pose,
    /// Frame after each joint's rotation, in the chain base frame.
    pub joint_frames: Vec<Pose>,
}

impl ForwardKinematics {
    /// Capsule axis segments, one per link.
    pub fn link_segments(&self) -> Vec<(Vec3, Vec3)> {
        let n = self.joint_frames.len();
        (0..n)
            .map(|i| {
                let a = self.joint_frames[i].position;
                let b = if i + 1 < n { self.joint_frames[i + 1].position } else { self.ee.position };
                (a, b)
            })
            .collect()
    }
}

/// 6 x n Jacobian stored column-major: rows 0..3 linear, 3..6 angular.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub columns: Vec<[f64; 6]>,
}

impl Jacobian {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn mul_vec(&self, v: &[f64]) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (col, &vj) in self.columns.iter().zip(v) {
            for r in 0..6 {
                out[r] += col[r] * vj;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IkMode {
    /// Position and orientation must both reach tolerance.
    Pose,
    /// Only position must converge; orientation rows are kept with `weight`
    /// as a soft preference.
    Position { orientation_weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    pub damping: f64,
    pub max_iterations: usize,
    /// Per-iteration cap on any single joint update, radians.
    pub max_step: f64,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    pub mode: IkMode,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions {
            damping: 0.1,
            max_iterations: 200,
            max_step: 0.2,
            position_tolerance: 1e-3,
            orientation_tolerance: 1e-2,
            mode: IkMode::Pose,
        }
    }
}

impl IkOptions {
    pub fn position_only() -> Self {
        IkOptions { mode: IkMode::Position { orientation_weight: 0.1 }, ..Default::default() }
    }
}

/// Step used by [`KinematicChain::numeric_jacobian`], radians.
pub const JACOBIAN_STEP: f64 = 1e-6;

impl KinematicChain {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// Checks invariants and normalizes every stored quaternion.
    pub fn validated(mut self) -> Result<Self, ChainError> {
        if self.joints.is_empty() {
            return Err(ChainError::Empty);
        }
        if self.link_radii.len() != self.joints.len() {
            return Err(ChainError::RadiiCount { radii: self.link_radii.len(), joints: self.joints.len() });
        }
        if let Some(&r) = self.link_radii.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return Err(ChainError::BadRadius(r));
        }
        for j in &mut self.joints {
            if j.kind != JointKind::Revolute {
                return Err(ChainError::UnsupportedJoint(j.name.clone()));
            }
            let norm = j.axis.norm();
            if !(libm::fabs(norm - 1.0) <= UNIT_TOL) {
                return Err(ChainError::AxisNotUnit { name: j.name.clone(), norm });
            }
            if !(j.limits[0] < j.limits[1]) {
                return Err(ChainError::BadLimits(j.name.clone()));
            }
            j.origin = normalize_pose(j.origin)?;
        }
        self.ee_offset = normalize_pose(self.ee_offset)?;
        self.camera_mount = normalize_pose(self.camera_mount)?;
        Ok(self)
    }

    fn check_len(&self, q: &JointConfig) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::LengthMismatch { expected: self.dof(), got: q.len() });
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &JointConfig) -> Result<ForwardKinematics, KinematicsError> {
        self.check_len(q)?;
        let mut frame = Pose::IDENTITY;
        let mut joint_frames = Vec::with_capacity(self.dof());
        for (joint, &angle) in self.joints.iter().zip(q.as_slice()) {
            frame = frame
                .compose(&joint.origin)
                .compose(&Pose::from_rotation(Quat::from_axis_angle(joint.axis, angle)));
            joint_frames.push(frame);
        }
        let ee = frame.compose(&self.ee_offset);
        Ok(ForwardKinematics { ee, joint_frames })
    }

    /// End-effector pose only.
    pub fn ee_pose(&self, q: &JointConfig) -> Result<Pose, KinematicsError> {
        Ok(self.forward_kinematics(q)?.ee)
    }

    /// Central-difference Jacobian with step [`JACOBIAN_STEP`]. The angular
    /// rows are world-frame angular velocity of the end effector.
    pub fn numeric_jacobian(&self, q: &JointConfig) -> Result<Jacobian, KinematicsError> {
        self.check_len(q)?;
        let h = JACOBIAN_STEP;
        let mut columns = Vec::with_capacity(self.dof());
        let mut qp = q.clone();
        for j in 0..self.dof() {
            let base = q.0[j];
            qp.0[j] = base + h;
            let plus = self.ee_pose(&qp)?;
            qp.0[j] = base - h;
            let minus = self.ee_pose(&qp)?;
            qp.0[j] = base;
            let lin = (plus.position - minus.position) / (2.0 * h);
            let ang = (plus.orientation * minus.orientation.conjugate()).to_rotation_vector() / (2.0 * h);
            columns.push([lin.x, lin.y, lin.z, ang.x, ang.y, ang.z]);
        }
        Ok(Jacobian { columns })
    }

    pub fn clamp(&self, q: &mut JointConfig) {
        for (v, j) in q.0.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.limits[0], j.limits[1]);
        }
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        q.len() == self.dof()
            && q.0.iter().zip(&self.joints).all(|(v, j)| *v >= j.limits[0] && *v <= j.limits[1])
    }

    /// Damped least squares: `dq = J^T (J J^T + lambda^2 I)^-1 e`, clamped
    /// to joint limits after every update.
    pub fn solve_ik(&self, target: &Pose, seed: &JointConfig, opts: &IkOptions) -> Result<JointConfig, KinematicsError> {
        self.check_len(seed)?;
        let mut q = seed.clone();
        self.clamp(&mut q);
        let (rows, ori_weight) = match opts.mode {
            IkMode::Pose => (6, 1.0),
            IkMode::Position { orientation_weight } if orientation_weight > 0.0 => (6, orientation_weight),
            IkMode::Position { .. } => (3, 0.0),
        };
        let lambda2 = opts.damping * opts.damping;

        let mut iteration = 0;
        loop {
            let ee = self.ee_pose(&q)?;
            let pos_err = target.position - ee.position;
            let rot_err = (target.orientation * ee.orientation.conjugate()).to_rotation_vector();
            let pos_norm = pos_err.norm();
            let ori_norm = ee.orientation.angle_to(&target.orientation);
            let converged = pos_norm < opts.position_tolerance
                && (matches!(opts.mode, IkMode::Position { .. }) || ori_norm < opts.orientation_tolerance);
            if converged {
                return Ok(q);
            }
            if iteration == opts.max_iterations {
                return Err(KinematicsError::NotConverged { position_error: pos_norm, orientation_error: ori_norm });
            }
            iteration += 1;

            let jac = self.numeric_jacobian(&q)?;
            let e = [pos_err.x, pos_err.y, pos_err.z, rot_err.x * ori_weight, rot_err.y * ori_weight, rot_err.z * ori_weight];
            let weight = |r: usize| if r < 3 { 1.0 } else { ori_weight };

            let mut a = alloc::vec![0.0; rows * rows];
            for r in 0..rows {
                for c in 0..rows {
                    let dot: f64 = jac.columns.iter().map(|col| col[r] * col[c]).sum();
                    a[r * rows + c] = dot * weight(r) * weight(c);
                }
                a[r * rows + r] += lambda2;
            }
            let Some(y) = solve_spd(&a, &e[..rows], rows) else {
                return Err(KinematicsError::NotConverged { position_error: pos_norm, orientation_error: ori_norm });
            };
            let mut dq: Vec<f64> = jac
                .columns
                .iter()
                .map(|col| (0..rows).map(|r| col[r] * weight(r) * y[r]).sum())
                .collect();
            let biggest = dq.iter().map(|d| libm::fabs(*d)).fold(0.0, f64::max);
            if biggest > opts.max_step {
                let s = opts.max_step / biggest;
                dq.iter_mut().for_each(|d| *d *= s);
            }
            for (v, d) in q.0.iter_mut().zip(&dq) {
                *v += d;
            }
            self.clamp(&mut q);
        }
    }
}

fn normalize_pose(p: Pose) -> Result<Pose, ChainError> {
    let n = p.orientation.norm();
    if !p.is_finite() || !(n > 0.0) {
        return Err(ChainError::BadPose);
    }
    Ok(Pose::new(p.position, p.orientation))
}

/// A chain mounted at a world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Robot {
    pub chain: KinematicChain,
    pub base: Pose,
}

impl Robot {
    pub fn new(chain: KinematicChain, base: Pose) -> Self {
        Robot { chain, base }
    }

    /// Forward kinematics expressed in the world frame.
    pub fn forward_kinematics(&self, q: &JointConfig) -> Result<ForwardKinematics, KinematicsError> {
        let fk = self.chain.forward_kinematics(q)?;
        Ok(ForwardKinematics {
            ee: self.base.compose(&fk.ee),
            joint_frames: fk.joint_frames.iter().map(|f| self.base.compose(f)).collect(),
        })
    }

    pub fn ee_pose(&self, q: &JointConfig) -> Result<Pose, KinematicsError> {
        Ok(self.base.compose(&self.chain.ee_pose(q)?))
    }

    /// World pose of the end-effector camera.
    pub fn camera_pose(&self, q: &JointConfig) -> Result<Pose, KinematicsError> {
        Ok(self.ee_pose(q)?.compose(&self.chain.camera_mount))
    }

    /// IK for a world-frame target.
    pub fn solve_ik(&self, target: &Pose, seed: &JointConfig, opts: &IkOptions) -> Result<JointConfig, KinematicsError> {
        let local = self.base.inverse().compose(target);
        self.chain.solve_ik(&local, seed, opts)
    }
}

/// Chains shipped with the crate.
pub mod builtin {
    use super::*;
    use alloc::borrow::ToOwned;
    use alloc::format;
    use core::f64::consts::PI;

    fn revolute(name: &str, axis: Vec3, origin: Pose, limits: [f64; 2]) -> JointSpec {
        JointSpec { name: name.to_owned(), axis, origin, limits, kind: JointKind::Revolute }
    }

    /// Planar chain of revolute z-joints with the given link lengths along +x.
    pub fn planar(link_lengths: &[f64]) -> KinematicChain {
        assert!(!link_lengths.is_empty());
        let mut joints = Vec::new();
        let mut offset = 0.0;
        for (i, len) in link_lengths.iter().enumerate() {
            joints.push(revolute(&format!("j{}", i + 1), Vec3::Z, Pose::from_translation(offset, 0.0, 0.0), [-PI, PI]));
            offset = *len;
        }
        KinematicChain {
            name: format!("planar{}", link_lengths.len()),
            joints,
            link_radii: alloc::vec![0.05; link_lengths.len()],
            ee_offset: Pose::from_translation(offset, 0.0, 0.0),
            camera_mount: default_camera_mount(),
        }
    }

    /// Two unit links, the textbook planar arm.
    pub fn planar2() -> KinematicChain {
        planar(&[1.0, 1.0])
    }

    /// Three links of 0.4, 0.3 and 0.2 m.
    pub fn planar3() -> KinematicChain {
        planar(&[0.4, 0.3, 0.2])
    }

    /// 7-DoF spatial arm with alternating z/y axes and roughly 0.85 m reach
    /// from the shoulder. Dimensions are Panda-like, not a faithful model.
    pub fn arm7() -> KinematicChain {
        let lim = 2.8973;
        KinematicChain {
            name: "arm7".to_owned(),
            joints: alloc::vec![
                revolute("j1", Vec3::Z, Pose::from_translation(0.0, 0.0, 0.333), [-lim, lim]),
                revolute("j2", Vec3::Y, Pose::IDENTITY, [-1.7628, 1.7628]),
                revolute("j3", Vec3::Z, Pose::from_translation(0.0, 0.0, 0.316), [-lim, lim]),
                revolute("j4", Vec3::Y, Pose::from_translation(0.0825, 0.0, 0.0), [0.0698, 3.0718]),
                revolute("j5", Vec3::Z, Pose::from_translation(-0.0825, 0.0, 0.384), [-lim, lim]),
                revolute("j6", Vec3::Y, Pose::IDENTITY, [-0.0175, 3.7525]),
                revolute("j7", Vec3::Z, Pose::from_translation(0.088, 0.0, 0.0), [-lim, lim]),
            ],
            link_radii: alloc::vec![0.06, 0.06, 0.055, 0.055, 0.05, 0.045, 0.035],
            ee_offset: Pose::from_translation(0.0, 0.0, 0.107),
            camera_mount: default_camera_mount(),
        }
    }

    /// Tool-down ready configuration for [`arm7`], above the near table.
    pub fn arm7_home() -> JointConfig {
        JointConfig(alloc::vec![0.0, -0.2, 0.0, 2.2, 0.0, 1.1416, 0.0])
    }

    /// [`arm7_home`] for arm7, otherwise mid-range on every joint.
    pub fn home_for(chain: &KinematicChain) -> JointConfig {
        if chain.name == "arm7" {
            return arm7_home();
        }
        JointConfig(chain.joints.iter().map(|j| 0.5 * (j.limits[0] + j.limits[1])).collect())
    }

    pub fn by_name(name: &str) -> Option<KinematicChain> {
        match name {
            "planar2" => Some(planar2()),
            "planar3" => Some(planar3()),
            "arm7" => Some(arm7()),
            _ => None,
        }
    }
}
