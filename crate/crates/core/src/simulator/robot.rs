use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};

use super::wire::track_windings;
use super::{update_wire, AnchorStatus, SimError, WorldModel, MAX_REEL_RATE, MAX_WINCH_TENSION, WIRE_CAPACITY};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    /// Linear drag, N per m/s.
    pub drag: f64,
    /// Velocity time constant, s.
    pub time_constant: f64,
    pub ground_friction: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            drag: 150.0,
            time_constant: 0.1,
            ground_friction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Winch {
    /// Wire exit in the robot frame.
    pub offset: Vec3,
    pub deployed_length: f64,
    pub tension: f64,
}

impl Winch {
    pub fn at(offset: Vec3) -> Self {
        Self {
            offset,
            deployed_length: 0.0,
            tension: 0.0,
        }
    }
}

/// Per-winch command. Zero tension leaves the wire slack and paying out.
/// With tension and no reel rate the winch holds constant tension, letting
/// wire in or out at up to its reel speed; with a reel rate it only reels in,
/// at that rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WinchCommand {
    pub tension: f64,
    pub reel_rate: Option<f64>,
}

impl WinchCommand {
    pub fn slack() -> Self {
        Self::default()
    }

    pub fn hold_tension(tension: f64) -> Self {
        Self { tension, reel_rate: None }
    }

    pub fn reel(tension: f64, rate: f64) -> Self {
        Self {
            tension,
            reel_rate: Some(rate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotBody {
    pub pose: Pose,
    pub velocity: Vec3,
    pub mass: f64,
    pub winches: Vec<Winch>,
    #[serde(default)]
    pub params: RobotParams,
}

impl Default for RobotBody {
    fn default() -> Self {
        Self {
            pose: Pose::identity(),
            velocity: Vec3::zeros(),
            mass: 8.0,
            winches: Vec::new(),
            params: RobotParams::default(),
        }
    }
}

/// Anchor index whose wire runs from each winch, if any.
fn winch_anchor(world: &WorldModel, winch: usize) -> Option<usize> {
    world
        .anchors
        .iter()
        .position(|a| a.winch == winch && a.status != AnchorStatus::Docked)
}

/// Wire pull plus gravity, before ground contact.
pub fn net_force(world: &WorldModel, commands: &[WinchCommand]) -> Vec3 {
    let mut f = Vec3::new(0.0, 0.0, -world.robot.mass * world.gravity);
    for (w, cmd) in commands.iter().enumerate() {
        if cmd.tension <= 0.0 {
            continue;
        }
        if let Some(ai) = winch_anchor(world, w) {
            f += cmd.tension * update_wire(&world.anchors[ai], world).direction_at_robot();
        }
    }
    f
}

/// Quasi-static point-mass step under wire tension, gravity and ground
/// contact, followed by the winch length constraints.
pub fn step_robot(world: &WorldModel, commands: &[WinchCommand], dt: f64) -> Result<WorldModel, SimError> {
    debug_assert!(dt > 0.0);
    for (winch, c) in commands.iter().enumerate() {
        if !(0.0..=MAX_WINCH_TENSION).contains(&c.tension) {
            return Err(SimError::TensionLimit { winch, tension: c.tension });
        }
    }
    let mut out = world.clone();
    let params = world.robot.params;
    let ground = world.ground_height;
    let p0 = world.robot.pose.position;
    let on_ground = p0.z <= ground + 1e-9;

    let mut f = net_force(world, commands);
    if on_ground && f.z <= 0.0 {
        let normal = -f.z;
        f.z = 0.0;
        let lateral = f.xy().norm();
        let grip = params.ground_friction * normal;
        if lateral <= grip {
            f.x = 0.0;
            f.y = 0.0;
        } else {
            let scale = (lateral - grip) / lateral;
            f.x *= scale;
            f.y *= scale;
        }
    }
    let mut v = world.robot.velocity;
    v += (f / params.drag - v) * (dt / params.time_constant).min(1.0);
    if on_ground && v.z < 0.0 {
        v.z = 0.0;
    }
    let mut p = p0 + v * dt;
    p.z = p.z.max(ground);

    // winch length windows
    let windows: Vec<Option<(usize, f64, f64)>> = (0..out.robot.winches.len())
        .map(|w| {
            let ai = winch_anchor(world, w)?;
            let cmd = commands.get(w).copied().unwrap_or_default();
            let deployed = world.robot.winches[w].deployed_length;
            let window = if cmd.tension <= 0.0 {
                (0.0, WIRE_CAPACITY)
            } else {
                match cmd.reel_rate {
                    None => (deployed - MAX_REEL_RATE * dt, deployed + MAX_REEL_RATE * dt),
                    Some(r) => (deployed - r.clamp(0.0, MAX_REEL_RATE) * dt, deployed),
                }
            };
            Some((ai, window.0.max(0.0), window.1.min(WIRE_CAPACITY)))
        })
        .collect();

    for _ in 0..4 {
        out.robot.pose.position = p;
        for (w, win) in windows.iter().enumerate() {
            let Some((ai, lo, hi)) = *win else {
                continue;
            };
            let exit = out.winch_exit(w);
            let mut anchor = out.anchors[ai].clone();
            track_windings(&mut anchor, &exit, &out);
            let wire = update_wire(&anchor, &out);
            let g = wire.total_length;
            let excess = if g > hi {
                g - hi
            } else if g < lo {
                g - lo
            } else {
                0.0
            };
            // moving the robot end along the wire changes its length one to one
            p += wire.direction_at_robot() * excess;
            p.z = p.z.max(ground);
            out.robot.pose.position = p;
        }
    }

    out.robot.pose.position = p;
    out.robot.velocity = (p - p0) / dt;
    for (w, win) in windows.iter().enumerate() {
        out.robot.winches[w].tension = commands.get(w).map_or(0.0, |c| c.tension);
        let Some((ai, lo, hi)) = *win else {
            continue;
        };
        let exit = out.winch_exit(w);
        let mut anchor = out.anchors[ai].clone();
        track_windings(&mut anchor, &exit, &out);
        let g = update_wire(&anchor, &out).total_length;
        out.anchors[ai] = anchor;
        out.robot.winches[w].deployed_length = g.clamp(lo, hi);
    }
    Ok(out)
}
