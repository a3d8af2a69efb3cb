//! Six-waypoint tying path expressed in a target frame, and the follower
//! that walks it in order.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};

pub const WAYPOINT_COUNT: usize = 6;

/// Waypoint coordinates in the target frame (x toward the robot, y along
/// the bar, z up), meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TyingShape {
    pub waypoints: [Vec3; WAYPOINT_COUNT],
}

impl Default for TyingShape {
    fn default() -> Self {
        Self {
            waypoints: [
                // approach from below on the near side
                Vec3::new(0.55, 0.35, -0.65),
                // over the top
                Vec3::new(-0.15, 0.35, 0.70),
                // down behind
                Vec3::new(-0.55, 0.35, -0.30),
                // under, back to the near side
                Vec3::new(0.25, 0.35, -0.70),
                // up in front, crossing past the hanging wire
                Vec3::new(0.65, -0.25, 0.35),
                // drop to jam against the crossing
                Vec3::new(0.75, -0.25, -0.30),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TyingTrajectory {
    pub waypoints: [Vec3; WAYPOINT_COUNT],
    pub mirrored: bool,
    pub target_id: u32,
}

impl TyingTrajectory {
    pub fn world_waypoint(&self, j: usize, target: &Pose) -> Vec3 {
        target.transform_point(&self.waypoints[j])
    }

    pub fn world_waypoints(&self, target: &Pose) -> Vec<Vec3> {
        self.waypoints
            .iter()
            .map(|w| target.transform_point(w))
            .collect()
    }

    /// Reflection across the target XZ-plane.
    pub fn mirror(&self) -> TyingTrajectory {
        TyingTrajectory {
            waypoints: self.waypoints.map(|w| Vec3::new(w.x, -w.y, w.z)),
            mirrored: !self.mirrored,
            target_id: self.target_id,
        }
    }

    /// Signed angle swept about the target y-axis by the waypoint polyline.
    pub fn winding_about_target_axis(&self) -> f64 {
        let mut total = 0.0;
        for pair in self.waypoints.windows(2) {
            let a = pair[0].z.atan2(pair[0].x);
            let b = pair[1].z.atan2(pair[1].x);
            total += crate::geometry::wrap_angle(b - a);
        }
        total
    }

    /// Smallest distance from any waypoint to the target y-axis.
    pub fn min_axis_clearance(&self) -> f64 {
        self.waypoints
            .iter()
            .map(|w| w.x.hypot(w.z))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn plan_tying(target_id: u32, mirrored: bool, shape: &TyingShape) -> TyingTrajectory {
    let base = TyingTrajectory {
        waypoints: shape.waypoints,
        mirrored: false,
        target_id,
    };
    if mirrored {
        base.mirror()
    } else {
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FollowProgress {
    Active(usize),
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowState {
    pub progress: FollowProgress,
    pub reach_tolerance: f64,
}

impl FollowState {
    pub fn new(reach_tolerance: f64) -> Self {
        Self {
            progress: FollowProgress::Active(0),
            reach_tolerance,
        }
    }

    pub fn active_index(&self) -> Option<usize> {
        match self.progress {
            FollowProgress::Active(j) => Some(j),
            FollowProgress::Done => None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.progress == FollowProgress::Done
    }
}

impl Default for FollowState {
    fn default() -> Self {
        Self::new(0.10)
    }
}

/// Moves to the next waypoint once the anchor is within the reach
/// tolerance of the active one.
pub fn advance(
    follow: &FollowState,
    traj: &TyingTrajectory,
    anchor_pos_world: &Vec3,
    target: &Pose,
) -> FollowState {
    let FollowProgress::Active(j) = follow.progress else {
        return *follow;
    };
    let goal = traj.world_waypoint(j, target);
    if (anchor_pos_world - goal).norm() <= follow.reach_tolerance {
        let progress = if j + 1 >= WAYPOINT_COUNT {
            FollowProgress::Done
        } else {
            FollowProgress::Active(j + 1)
        };
        FollowState { progress, ..*follow }
    } else {
        *follow
    }
}
