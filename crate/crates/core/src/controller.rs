//! Per-axis PID toward the active waypoint, with the derivative acting on
//! measured velocity, and conversion into the anchor's body frame.

use serde::{Deserialize, Serialize};

use crate::geometry::{yaw_rotation_matrix, Vec3, YawAngle};

/// Symmetric bound on every command axis.
pub const COMMAND_LIMIT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub kp: Vec3,
    pub ki: Vec3,
    pub kd: Vec3,
    /// Bound on each component of the integrated error (m·s).
    pub integral_limit: f64,
    pub output_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: Vec3::repeat(60.0),
            ki: Vec3::repeat(5.0),
            kd: Vec3::repeat(40.0),
            integral_limit: 20.0,
            output_limit: COMMAND_LIMIT,
        }
    }
}

impl PidGains {
    pub fn uniform(kp: f64, ki: f64, kd: f64) -> Self {
        Self {
            kp: Vec3::repeat(kp),
            ki: Vec3::repeat(ki),
            kd: Vec3::repeat(kd),
            ..Self::default()
        }
    }
}

/// Body-frame command in [-100, 100] per axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
}

impl Command {
    pub fn as_vec(&self) -> Vec3 {
        Vec3::new(self.cx, self.cy, self.cz)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub integral: Vec3,
    pub previous_error: Vec3,
}

impl PidState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

pub fn pid_step(
    gains: &PidGains,
    state: &PidState,
    p_anchor: &Vec3,
    p_ref_world: &Vec3,
    v_anchor: &Vec3,
    anchor_yaw: YawAngle,
    dt: f64,
) -> (Command, PidState) {
    debug_assert!(dt > 0.0);
    let error = p_ref_world - p_anchor;
    let lim = gains.integral_limit;
    let integral = (state.integral + error * dt).map(|c| c.clamp(-lim, lim));

    let raw_world = gains.kp.component_mul(&error) + gains.ki.component_mul(&integral)
        - gains.kd.component_mul(v_anchor);
    let body = yaw_rotation_matrix(-anchor_yaw) * raw_world;
    let out = gains.output_limit.min(COMMAND_LIMIT);
    let clamp = |c: f64| if c.is_nan() { 0.0 } else { c.clamp(-out, out) };
    let cmd = Command {
        cx: clamp(body.x),
        cy: clamp(body.y),
        cz: clamp(body.z),
    };
    (
        cmd,
        PidState {
            integral,
            previous_error: error,
        },
    )
}
