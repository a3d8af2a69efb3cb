//! Autonomy stack for a wire-driven robot that ties its wires to the
//! environment with small flying anchors.
//!
//! - [`perception`]: depth-image cloud pipeline for targets and anchors
//! - [`target_manager`]: Kalman-tracked candidate attachment frames
//! - [`anchor_estimator`]: 11-state EKF fusing camera fixes with anchor odometry
//! - [`planner`]: six-waypoint tying path and follower
//! - [`controller`]: waypoint PID producing drone velocity commands
//! - [`simulator`]: deterministic world, sensors, wires and tie verifier
//! - [`harness`]: scenario configs, mission loop and run logs

pub mod anchor_estimator;
pub mod controller;
pub mod geometry;
pub mod harness;
pub mod perception;
pub mod planner;
pub mod simulator;
pub mod target_manager;

pub use geometry::{Pose, Quat, Vec3, YawAngle};
