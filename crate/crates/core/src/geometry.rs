//! Frame and rotation algebra shared by the rest of the crate.
//!
//! Conventions: right-handed, z-up world. Yaw is counterclockwise positive
//! viewed from +z. Quaternion differences are expressed as world-frame
//! (left-multiplied) rotation vectors.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Neg, Sub};

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Rigid transform from a local frame into its parent (usually world).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zeros(), Quat::identity())
    }

    pub fn from_position(position: Vec3) -> Self {
        Self::new(position, Quat::identity())
    }

    /// Pose with a pure yaw rotation.
    pub fn from_position_yaw(position: Vec3, yaw: f64) -> Self {
        Self::new(position, Quat::from_axis_angle(&Vec3::z_axis(), yaw))
    }

    /// Builds a pose from the three axis directions expressed in the parent
    /// frame. The axes must already be orthonormal and right-handed.
    pub fn from_axes(position: Vec3, x: Vec3, y: Vec3, z: Vec3) -> Self {
        let rot = Rotation3::from_matrix_unchecked(Mat3::from_columns(&[x, y, z]));
        Self::new(position, Quat::from_rotation_matrix(&rot))
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.orientation.to_rotation_matrix().into_inner()
    }

    pub fn x_axis(&self) -> Vec3 {
        self.orientation * Vec3::x()
    }

    pub fn y_axis(&self) -> Vec3 {
        self.orientation * Vec3::y()
    }

    pub fn z_axis(&self) -> Vec3 {
        self.orientation * Vec3::z()
    }

    /// Maps a point given in this frame into the parent frame.
    pub fn transform_point(&self, local: &Vec3) -> Vec3 {
        self.position + self.orientation * local
    }

    /// Maps a parent-frame point into this frame.
    pub fn inverse_transform_point(&self, parent: &Vec3) -> Vec3 {
        self.orientation.inverse() * (parent - self.position)
    }

    pub fn transform_vector(&self, local: &Vec3) -> Vec3 {
        self.orientation * local
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Planar heading in radians, always wrapped to (-π, π].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct YawAngle(f64);

impl YawAngle {
    pub fn new(radians: f64) -> Self {
        Self(wrap_angle(radians))
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Yaw of a rotation about world z (roll and pitch ignored).
    pub fn of_quaternion(q: &Quat) -> Self {
        let (_, _, yaw) = q.euler_angles();
        Self::new(yaw)
    }
}

impl From<f64> for YawAngle {
    fn from(value: f64) -> Self {
        Self::new(value)
    }
}

impl From<YawAngle> for f64 {
    fn from(value: YawAngle) -> Self {
        value.0
    }
}

impl Add for YawAngle {
    type Output = YawAngle;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.0 + rhs.0)
    }
}

impl Sub for YawAngle {
    type Output = YawAngle;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.0 - rhs.0)
    }
}

impl Neg for YawAngle {
    type Output = YawAngle;
    fn neg(self) -> Self {
        Self::new(-self.0)
    }
}

impl fmt::Display for YawAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} rad", self.0)
    }
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Rotation vector of the world-frame difference `q_z · conj(q_x)`, taken as
/// twice the imaginary part. For a relative angle θ its norm is `2 sin(θ/2)`,
/// which equals θ to first order.
///
/// `q_z` is sign-flipped first if needed so the difference lies in the
/// positive-w hemisphere.
pub fn rotation_vector_between(q_z: &Quat, q_x: &Quat) -> Vec3 {
    let mut diff: Quaternion<f64> = q_z.quaternion() * q_x.quaternion().conjugate();
    if diff.w < 0.0 {
        diff = -diff;
    }
    2.0 * diff.imag()
}

/// Composes the rotation described by `n` (angle `|n|` about `n/|n|`, world
/// frame) onto `q`. Inverse of [`rotation_vector_between`] to first order.
pub fn apply_rotation_vector(q: &Quat, n: &Vec3) -> Quat {
    let angle = n.norm();
    if angle == 0.0 {
        return *q;
    }
    let delta = Quat::from_scaled_axis(*n);
    Quat::new_normalize((delta * q).into_inner())
}

/// Distance between two orientations that ignores the double cover.
pub fn quaternion_distance(a: &Quat, b: &Quat) -> f64 {
    let (qa, qb) = (a.quaternion(), b.quaternion());
    (qa - qb).norm().min((qa + qb).norm())
}

/// Rotation about the vertical axis by `phi`.
pub fn yaw_rotation_matrix(phi: YawAngle) -> Mat3 {
    let (s, c) = phi.radians().sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Derivative of [`yaw_rotation_matrix`] with respect to the angle.
pub fn yaw_rotation_matrix_derivative(phi: YawAngle) -> Mat3 {
    let (s, c) = phi.radians().sin_cos();
    Mat3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}
