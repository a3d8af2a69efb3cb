use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anchor_estimator::{idx, NoiseParams, ObservationBundle, StateVector};
use crate::controller::Command;
use crate::geometry::{yaw_rotation_matrix, Pose, Vec3, YawAngle};

use super::{OdomDrift, DEFAULT_VELOCITY_GAIN, WIRE_CAPACITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "cylinder")]
pub enum AnchorStatus {
    Docked,
    Flying,
    /// Jammed on the given cylinder; the anchor no longer moves.
    Tied(usize),
}

/// Ground truth for one flying anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAnchor {
    pub id: u32,
    pub position: Vec3,
    pub yaw: YawAngle,
    pub velocity: Vec3,
    pub odom_offset_u: Vec3,
    pub odom_offset_phi: YawAngle,
    pub wire_attach_point: Vec3,
    pub winch: usize,
    pub wire_deployed_length: f64,
    /// Anchor piece mass, kg.
    pub anchor_mass: f64,
    pub velocity_gain: f64,
    /// Standard deviation of plant velocity noise, m/s.
    pub velocity_noise: f64,
    pub drift: OdomDrift,
    pub status: AnchorStatus,
    /// Continuous wire winding about each world cylinder, rad.
    #[serde(default)]
    pub wire_windings: Vec<f64>,
}

impl SimAnchor {
    pub fn new(id: u32, position: Vec3, yaw: YawAngle, winch: usize) -> Self {
        Self {
            id,
            position,
            yaw,
            velocity: Vec3::zeros(),
            odom_offset_u: Vec3::zeros(),
            odom_offset_phi: YawAngle::new(0.0),
            wire_attach_point: position,
            winch,
            wire_deployed_length: WIRE_CAPACITY,
            anchor_mass: 0.005,
            velocity_gain: DEFAULT_VELOCITY_GAIN,
            velocity_noise: 0.02,
            drift: OdomDrift::default(),
            status: AnchorStatus::Docked,
            wire_windings: Vec::new(),
        }
    }

    pub fn true_pose(&self) -> Pose {
        Pose::from_position_yaw(self.position, self.yaw.radians())
    }
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vec3 {
    if sigma <= 0.0 {
        return Vec3::zeros();
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

/// Velocity-commanded kinematic drone. Motion is clipped to the sphere of
/// deployed wire around the attach point; docked and tied anchors stay put.
pub fn step_anchor<R: Rng + ?Sized>(anchor: &SimAnchor, cmd: &Command, dt: f64, rng: &mut R) -> SimAnchor {
    debug_assert!(dt > 0.0);
    let mut out = anchor.clone();
    if out.drift.u_sigma > 0.0 || out.drift.phi_sigma > 0.0 {
        out.odom_offset_u += gaussian3(rng, out.drift.u_sigma * dt.sqrt());
        out.odom_offset_phi = out.odom_offset_phi + YawAngle::new(gaussian(rng, out.drift.phi_sigma * dt.sqrt()));
    }
    if out.status != AnchorStatus::Flying {
        out.velocity = Vec3::zeros();
        return out;
    }
    let body = cmd.as_vec();
    let mut v = anchor.velocity_gain * (yaw_rotation_matrix(anchor.yaw) * body);
    v += gaussian3(rng, anchor.velocity_noise);
    let mut p = anchor.position + v * dt;
    let offset = p - anchor.wire_attach_point;
    let limit = anchor.wire_deployed_length;
    if offset.norm() > limit {
        p = anchor.wire_attach_point + offset.normalize() * limit;
        v = (p - anchor.position) / dt;
    }
    out.position = p;
    out.velocity = v;
    out
}

/// Odometry reported in the drifting frame: position `T(φ)p + u`, velocity
/// `T(φ)v`, heading `yaw + φ`, each with Gaussian noise from `noise`.
/// With `noise = None` the readings are exact.
pub fn sense_odometry<R: Rng + ?Sized>(
    anchor: &SimAnchor,
    noise: Option<&NoiseParams>,
    rng: &mut R,
) -> ObservationBundle {
    let t = yaw_rotation_matrix(anchor.odom_offset_phi);
    let mut p = t * anchor.position + anchor.odom_offset_u;
    let mut v = t * anchor.velocity;
    let mut yaw = anchor.yaw + anchor.odom_offset_phi;
    if let Some(n) = noise {
        p += gaussian3(rng, n.odom_position_sigma);
        v += gaussian3(rng, n.odom_velocity_sigma);
        yaw = yaw + YawAngle::new(gaussian(rng, n.odom_yaw_sigma));
    }
    ObservationBundle {
        camera_fix: None,
        odom_position: Some(p),
        odom_velocity: Some(v),
        odom_yaw: Some(yaw),
    }
}

/// The estimator state that exactly reproduces this anchor's noiseless
/// sensor readings.
pub fn true_state_vector(anchor: &SimAnchor) -> StateVector {
    let mut x = StateVector::zeros();
    x.fixed_rows_mut::<3>(idx::POS).copy_from(&anchor.position);
    x.fixed_rows_mut::<3>(idx::VEL).copy_from(&anchor.velocity);
    x[idx::THETA] = (-(anchor.yaw + anchor.odom_offset_phi)).radians();
    x.fixed_rows_mut::<3>(idx::U).copy_from(&anchor.odom_offset_u);
    x[idx::PHI] = anchor.odom_offset_phi.radians();
    x
}
