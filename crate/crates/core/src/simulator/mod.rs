//! Deterministic world model standing in for the hardware: kinematic
//! drones with drifting odometry, a z-buffered RGB-D camera with a
//! synthetic detector, taut wires wrapping around cylinders, winch-driven
//! robot mechanics, and the geometric tie verifier.

mod anchor;
mod camera;
mod robot;
mod tie;
mod wire;

pub use anchor::{sense_odometry, step_anchor, true_state_vector, AnchorStatus, SimAnchor};
pub use camera::{
    aim_camera, camera_pose, render_depth, sense_camera, CameraModel, DetectorParams, RenderHit,
    RenderedFrame, ANCHOR_BODY_RADIUS,
};
pub use robot::{net_force, step_robot, RobotBody, RobotParams, Winch, WinchCommand};
pub use tie::{verify_tie, winding_about_axis, TieVerdict};
pub use wire::{
    geodesic_around_circle, relative_axis_angle, reset_windings, track_windings, update_wire, WirePolyline,
    WrapDirection,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::perception::DetectionLabel;

/// Continuous tension rating of one winch module, N.
pub const MAX_WINCH_TENSION: f64 = 180.0;
/// Wire capacity of one winch module, m.
pub const WIRE_CAPACITY: f64 = 5.3;
/// Reel-in speed of one winch module, m/s.
pub const MAX_REEL_RATE: f64 = 0.242;
/// Proof load of the anchor piece, N.
pub const ANCHOR_LOAD_LIMIT: f64 = 340.0;
pub const MAX_WINCHES: usize = 8;
pub const GRAVITY: f64 = 9.81;
/// Command units to m/s.
pub const DEFAULT_VELOCITY_GAIN: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("commanded tension {tension} N on winch {winch} exceeds {MAX_WINCH_TENSION} N")]
    TensionLimit { winch: usize, tension: f64 },
    #[error("path never leaves the bar axis")]
    DegeneratePath,
    #[error("path needs at least two points")]
    PathTooShort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectLabel {
    Bar,
    Branch,
    /// Rendered but never detected as an attachment candidate.
    Obstacle,
}

impl ObjectLabel {
    pub fn detection_label(self) -> Option<DetectionLabel> {
        match self {
            ObjectLabel::Bar => Some(DetectionLabel::Bar),
            ObjectLabel::Branch => Some(DetectionLabel::Branch),
            ObjectLabel::Obstacle => None,
        }
    }
}

/// Finite cylinder given by its axis segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub name: String,
    pub p0: Vec3,
    pub p1: Vec3,
    pub radius: f64,
    pub label: ObjectLabel,
}

impl Cylinder {
    pub fn axis(&self) -> Vec3 {
        (self.p1 - self.p0).normalize()
    }

    pub fn length(&self) -> f64 {
        (self.p1 - self.p0).norm()
    }

    /// Closest point on the axis segment.
    pub fn closest_axis_point(&self, p: &Vec3) -> Vec3 {
        let a = self.p1 - self.p0;
        let t = ((p - self.p0).dot(&a) / a.norm_squared()).clamp(0.0, 1.0);
        self.p0 + a * t
    }

    /// Distance from `p` to the axis segment.
    pub fn axis_distance(&self, p: &Vec3) -> f64 {
        (p - self.closest_axis_point(p)).norm()
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.p0 + self.p1)
    }
}

/// Optional random-walk drift of the odometry frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdomDrift {
    /// m/√s
    pub u_sigma: f64,
    /// rad/√s
    pub phi_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub cylinders: Vec<Cylinder>,
    pub robot: RobotBody,
    pub anchors: Vec<SimAnchor>,
    pub gravity: f64,
    pub ground_height: f64,
    pub rng_seed: u64,
}

impl WorldModel {
    pub fn cylinder_index(&self, name: &str) -> Option<usize> {
        self.cylinders.iter().position(|c| c.name == name)
    }

    /// World position of a winch exit on the robot.
    pub fn winch_exit(&self, winch: usize) -> Vec3 {
        self.robot.pose.transform_point(&self.robot.winches[winch].offset)
    }
}
