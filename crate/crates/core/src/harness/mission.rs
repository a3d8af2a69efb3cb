use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::anchor_estimator::{
    ekf_predict, ekf_update, gate_camera_fix, gate_distance, AnchorBelief, NoiseConfig,
};
use crate::controller::{pid_step, Command, PidState};
use crate::geometry::{Pose, Vec3, YawAngle};
use crate::perception::{recognize_anchor, recognize_target, DetectionLabel};
use crate::planner::{advance, plan_tying, FollowState, TyingTrajectory};
use crate::simulator::{
    aim_camera, camera_pose, sense_camera, sense_odometry, step_anchor, step_robot, update_wire, verify_tie,
    AnchorStatus, RobotBody, SimAnchor, Winch, WinchCommand, WorldModel, ANCHOR_BODY_RADIUS,
};
use crate::target_manager::TargetSet;

use super::config::{DrivePlan, ScenarioConfig};
use super::log::{
    AnchorRecord, Direction, Event, EventKind, LogHeader, Outcome, Phase, RobotRecord, RunLog, TickRecord,
    TrackRecord,
};

/// Visible-surface centroids of a sphere sit this fraction of its radius
/// in front of the center.
const SPHERE_CENTROID_OFFSET: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Docked,
    Launching,
    Waiting,
    Tying,
    Tied,
}

struct AnchorRuntime {
    stage: Stage,
    belief: Option<AnchorBelief>,
    pid: PidState,
    follow: FollowState,
    traj: Option<TyingTrajectory>,
    target: Option<(u32, Pose)>,
    cylinder: usize,
    hover: Vec3,
    path: Vec<Vec3>,
    command: Command,
    near: Vec<bool>,
    stage_started: f64,
}

/// Drive-phase bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
enum DriveStep {
    Pretension,
    Reel,
    Lift,
    Shift(usize),
    Settle(usize),
}

struct Mission<'a> {
    cfg: &'a ScenarioConfig,
    dt: f64,
    rng: ChaCha8Rng,
    world: WorldModel,
    noise: NoiseConfig,
    targets: TargetSet,
    anchors: Vec<AnchorRuntime>,
    phase: Phase,
    phase_started: f64,
    designations: Vec<Option<u32>>,
    drive: DriveStep,
    drive_started: f64,
    drive_origin: Vec3,
    robot_start: Vec3,
    maneuvers: Vec<(Direction, f64)>,
    ties_verified: usize,
    failure: Option<String>,
    camera: [f64; 2],
    events: Vec<Event>,
    tick: u64,
}

fn build_world(cfg: &ScenarioConfig) -> WorldModel {
    let robot_pose = Pose::from_position_yaw(cfg.robot.position, cfg.robot.yaw);
    let robot = RobotBody {
        pose: robot_pose,
        velocity: Vec3::zeros(),
        mass: cfg.robot.mass,
        winches: cfg.anchors.iter().map(|a| Winch::at(a.winch_exit)).collect(),
        params: cfg.robot.params,
    };
    let anchors = cfg
        .anchors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let pad = robot_pose.transform_point(&a.pad);
            let mut s = SimAnchor::new(i as u32, pad, YawAngle::new(cfg.robot.yaw + a.yaw), i);
            s.odom_offset_u = a.odom_offset_u;
            s.odom_offset_phi = YawAngle::new(a.odom_offset_phi);
            s.drift = a.drift;
            s.wire_attach_point = robot_pose.transform_point(&a.winch_exit);
            s
        })
        .collect();
    WorldModel {
        cylinders: cfg.cylinders.clone(),
        robot,
        anchors,
        gravity: crate::simulator::GRAVITY,
        ground_height: 0.0,
        rng_seed: cfg.seed,
    }
}

impl<'a> Mission<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        let world = build_world(cfg);
        let anchors = cfg
            .anchors
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let pad = world.anchors[i].position;
                AnchorRuntime {
                    stage: Stage::Docked,
                    belief: None,
                    pid: PidState::default(),
                    follow: FollowState::new(cfg.tying.reach_tolerance),
                    traj: None,
                    target: None,
                    cylinder: world.cylinder_index(&a.target).expect("validated target"),
                    hover: pad + Vec3::new(0.0, 0.0, cfg.launch.hover_height),
                    path: Vec::new(),
                    command: Command::default(),
                    near: vec![false; world.cylinders.len()],
                    stage_started: 0.0,
                }
            })
            .collect();
        let dt = cfg.dt();
        Self {
            cfg,
            dt,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            robot_start: world.robot.pose.position,
            world,
            noise: NoiseConfig::from_params(&cfg.noise, dt),
            targets: TargetSet::new(cfg.targets),
            anchors,
            phase: Phase::Recognize,
            phase_started: 0.0,
            designations: vec![None; cfg.anchors.len()],
            drive: DriveStep::Pretension,
            drive_started: 0.0,
            drive_origin: Vec3::zeros(),
            maneuvers: Vec::new(),
            ties_verified: 0,
            failure: None,
            camera: [0.0, 0.0],
            events: Vec::new(),
            tick: 0,
        }
    }

    fn now(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    fn emit(&mut self, kind: EventKind) {
        self.events.push(Event { tick: self.tick, kind });
    }

    fn set_phase(&mut self, to: Phase) {
        let from = self.phase;
        self.phase = to;
        self.phase_started = self.now();
        self.emit(EventKind::PhaseChange { from, to });
    }

    fn fail(&mut self, reason: String) {
        self.failure = Some(reason);
        self.set_phase(Phase::Failed);
    }

    fn camera_position(&self) -> Vec3 {
        self.world.robot.pose.transform_point(&self.cfg.robot.camera_offset)
    }

    fn look_at(&mut self, point: &Vec3) {
        let (yaw, pitch) = aim_camera(&self.camera_position(), point);
        self.camera = [yaw, pitch];
    }

    // ---- sensing -------------------------------------------------------

    fn recognize(&mut self) {
        let views = &self.cfg.recognition.views;
        let dwell = self.cfg.recognition.dwell_ticks.max(1) as u64;
        let elapsed = ((self.now() - self.phase_started) / self.dt).round() as u64;
        let [yaw, pitch] = views[((elapsed / dwell) as usize) % views.len()];
        let robot_yaw = YawAngle::of_quaternion(&self.world.robot.pose.orientation).radians();
        self.camera = [robot_yaw + yaw, pitch];

        let pose = camera_pose(self.camera_position(), self.camera[0], self.camera[1]);
        let (image, boxes) = sense_camera(&self.world, &self.cfg.camera, &pose, &self.cfg.detector, true, &mut self.rng);
        for b in boxes.iter().filter(|b| b.label.is_attachable()) {
            if let Ok(obs) = recognize_target(&image, b, &pose, &self.cfg.perception) {
                self.targets.observe(&obs, self.cfg.targets.threshold);
            }
        }
    }

    /// Anchors whose estimators may take a camera fix this tick.
    fn fix_candidates(&self) -> Vec<usize> {
        self.anchors
            .iter()
            .enumerate()
            .filter(|(_, a)| match a.stage {
                Stage::Launching | Stage::Waiting => true,
                Stage::Tying => self.cfg.tying.camera_fixes,
                _ => false,
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn camera_fixes(&mut self) -> Vec<Option<Vec3>> {
        let mut assigned: Vec<Option<(f64, Vec3)>> = vec![None; self.anchors.len()];
        let candidates = self.fix_candidates();
        if candidates.is_empty() {
            return vec![None; self.anchors.len()];
        }
        let cam_pos = self.camera_position();
        let pose = camera_pose(cam_pos, self.camera[0], self.camera[1]);
        let (image, boxes) = sense_camera(&self.world, &self.cfg.camera, &pose, &self.cfg.detector, true, &mut self.rng);
        let threshold = self.cfg.launch.gate_threshold;
        for b in boxes.iter().filter(|b| b.label == DetectionLabel::Anchor) {
            let Ok(surface) = recognize_anchor(&image, b, &pose, &self.cfg.perception) else {
                continue;
            };
            let ray = (surface - cam_pos).normalize();
            let fix = surface + ray * (SPHERE_CENTROID_OFFSET * ANCHOR_BODY_RADIUS);
            let mut best: Option<(usize, f64)> = None;
            let mut nearest: Option<(usize, f64)> = None;
            for &i in &candidates {
                let belief = self.anchors[i].belief.as_ref().expect("airborne anchors have beliefs");
                let first = belief.camera_fixes_accepted == 0;
                let d = gate_distance(belief, &fix, first);
                if nearest.is_none_or(|(_, n)| d < n) {
                    nearest = Some((i, d));
                }
                if gate_camera_fix(belief, &fix, threshold, first) && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            match best {
                Some((i, d)) => {
                    if assigned[i].is_none_or(|(ad, _)| d < ad) {
                        assigned[i] = Some((d, fix));
                    }
                }
                None => {
                    if let Some((i, d)) = nearest {
                        if d < 2.0 * threshold {
                            self.emit(EventKind::GateRejected {
                                distance: d,
                                nearest_anchor: i as u32,
                            });
                        }
                    }
                }
            }
        }
        assigned.into_iter().map(|a| a.map(|(_, f)| f)).collect()
    }

    fn estimate(&mut self, fixes: &[Option<Vec3>]) {
        for i in 0..self.anchors.len() {
            if !matches!(self.anchors[i].stage, Stage::Launching | Stage::Waiting | Stage::Tying) {
                continue;
            }
            let mut z = sense_odometry(&self.world.anchors[i], Some(&self.cfg.noise), &mut self.rng);
            z.camera_fix = fixes[i];
            let rt = &mut self.anchors[i];
            let belief = rt.belief.as_ref().expect("airborne anchors have beliefs");
            let predicted = ekf_predict(belief, self.dt, &self.noise);
            // a failed update keeps the prediction
            rt.belief = Some(ekf_update(&predicted, &z, &self.noise).unwrap_or(predicted));
        }
    }

    // ---- planning and control -------------------------------------------

    fn control(&mut self) {
        let dt = self.dt;
        for i in 0..self.anchors.len() {
            let rt = &mut self.anchors[i];
            let Some(belief) = rt.belief.as_ref() else {
                rt.command = Command::default();
                continue;
            };
            let est = belief.position();
            let reference = match rt.stage {
                Stage::Launching | Stage::Waiting => rt.hover,
                Stage::Tying => {
                    let (_, target) = rt.target.expect("tying anchors have targets");
                    let traj = rt.traj.as_ref().expect("tying anchors have paths");
                    let before = rt.follow.active_index();
                    rt.follow = advance(&rt.follow, traj, &est, &target);
                    let after = rt.follow.active_index();
                    if after != before {
                        rt.pid.reset();
                        if let Some(j) = before {
                            self.events.push(Event {
                                tick: self.tick,
                                kind: EventKind::WaypointReached { anchor: i as u32, index: j },
                            });
                        }
                    }
                    match after {
                        Some(j) => traj.world_waypoint(j, &target),
                        None => {
                            rt.command = Command::default();
                            continue;
                        }
                    }
                }
                _ => {
                    rt.command = Command::default();
                    continue;
                }
            };
            let (cmd, pid) = pid_step(
                &self.cfg.gains,
                &rt.pid,
                &est,
                &reference,
                &belief.velocity(),
                belief.world_yaw(),
                dt,
            );
            rt.command = cmd;
            rt.pid = pid;
        }
    }

    fn winch_commands(&self) -> Vec<WinchCommand> {
        let n = self.anchors.len();
        let tied: Vec<bool> = self.anchors.iter().map(|a| a.stage == Stage::Tied).collect();
        let uniform = |c: WinchCommand| -> Vec<WinchCommand> {
            (0..n).map(|i| if tied[i] { c } else { WinchCommand::slack() }).collect()
        };
        match (self.phase, &self.cfg.drive) {
            (Phase::Tension, DrivePlan::Climb { pretension, .. } | DrivePlan::Maneuver { pretension, .. }) => {
                uniform(WinchCommand::hold_tension(*pretension))
            }
            (Phase::Drive, DrivePlan::Climb { tension, reel_rate, .. }) => {
                uniform(WinchCommand::reel(*tension, *reel_rate))
            }
            (
                Phase::Drive,
                DrivePlan::Maneuver {
                    lift_tension, delta, ..
                },
            ) => {
                let DriveStep::Shift(k) = self.drive else {
                    return uniform(WinchCommand::hold_tension(*lift_tension));
                };
                let dir = Direction::ALL[k].unit();
                let robot = self.world.robot.pose.position;
                (0..n)
                    .map(|i| {
                        if !tied[i] {
                            return WinchCommand::slack();
                        }
                        let toward = self.world.anchors[i].position - robot;
                        let bias = if dir.z > 0.0 {
                            1.0
                        } else {
                            let h = Vec3::new(toward.x, toward.y, 0.0);
                            if h.norm() > 1e-9 {
                                h.normalize().dot(&dir)
                            } else {
                                0.0
                            }
                        };
                        WinchCommand::hold_tension(lift_tension + delta * bias)
                    })
                    .collect()
            }
            _ => vec![WinchCommand::slack(); n],
        }
    }

    // ---- actuation ---------------------------------------------------------

    fn actuate(&mut self) {
        for i in 0..self.anchors.len() {
            let cmd = self.anchors[i].command;
            let mut next = step_anchor(&self.world.anchors[i], &cmd, self.dt, &mut self.rng);
            next.wire_attach_point = self.world.winch_exit(next.winch);
            self.world.anchors[i] = next;
        }
        for i in 0..self.anchors.len() {
            if self.world.anchors[i].status == AnchorStatus::Docked {
                continue;
            }
            let exit = self.world.winch_exit(i);
            let mut a = self.world.anchors[i].clone();
            crate::simulator::track_windings(&mut a, &exit, &self.world);
            self.world.anchors[i] = a;
            if self.world.anchors[i].status == AnchorStatus::Flying {
                let p = self.world.anchors[i].position;
                self.anchors[i].path.push(p);
            }
        }
        let commands = self.winch_commands();
        match step_robot(&self.world, &commands, self.dt) {
            Ok(w) => self.world = w,
            Err(e) => self.fail(e.to_string()),
        }
    }

    fn check_proximity(&mut self) {
        let margin = self.cfg.tying.proximity_margin;
        for i in 0..self.anchors.len() {
            if self.world.anchors[i].status != AnchorStatus::Flying {
                continue;
            }
            let p = self.world.anchors[i].position;
            for (ci, cyl) in self.world.cylinders.iter().enumerate() {
                let clearance = cyl.axis_distance(&p) - cyl.radius - ANCHOR_BODY_RADIUS;
                let near = clearance < margin;
                if near && !self.anchors[i].near[ci] {
                    self.events.push(Event {
                        tick: self.tick,
                        kind: EventKind::Proximity {
                            anchor: i as u32,
                            cylinder: cyl.name.clone(),
                            clearance,
                        },
                    });
                }
                self.anchors[i].near[ci] = near;
            }
        }
    }

    // ---- phase logic -------------------------------------------------------

    fn takeoff(&mut self, i: usize) {
        let now = self.now();
        let pad = self.world.anchors[i].position;
        let exit = self.world.winch_exit(i);
        let mut a = self.world.anchors[i].clone();
        a.status = AnchorStatus::Flying;
        a.wire_attach_point = exit;
        crate::simulator::reset_windings(&mut a, &exit, &self.world);
        self.world.anchors[i] = a;
        let mut belief = AnchorBelief::new(i as u32, Pose::from_position(pad), &self.cfg.prior);
        let z = sense_odometry(&self.world.anchors[i], Some(&self.cfg.noise), &mut self.rng);
        belief.seed_from_odometry(&z.odom_position.expect("odometry"), z.odom_yaw.expect("odometry"));
        let rt = &mut self.anchors[i];
        rt.belief = Some(belief);
        rt.stage = Stage::Launching;
        rt.stage_started = now;
        rt.path = vec![pad];
        self.emit(EventKind::Takeoff { anchor: i as u32 });
    }

    fn start_tying(&mut self, i: usize) {
        let track = self.designations[i].expect("designated before launch");
        let pose = self.targets.get_target(track).expect("designated track exists");
        let now = self.now();
        let rt = &mut self.anchors[i];
        rt.traj = Some(plan_tying(track, self.cfg.anchors[i].mirrored, &self.cfg.tying.shape));
        rt.target = Some((track, pose));
        rt.follow = FollowState::new(self.cfg.tying.reach_tolerance);
        rt.pid.reset();
        rt.stage = Stage::Tying;
        rt.stage_started = now;
    }

    fn finish_tie(&mut self, i: usize) {
        let ci = self.anchors[i].cylinder;
        let cyl = self.world.cylinders[ci].clone();
        let (winding, final_drop, success) = match verify_tie(&self.anchors[i].path, &cyl) {
            Ok(v) => (v.winding, v.final_drop, v.success),
            Err(_) => (0.0, 0.0, false),
        };
        self.emit(EventKind::TieVerified {
            anchor: i as u32,
            cylinder: cyl.name.clone(),
            winding,
            final_drop,
            success,
        });
        if success {
            self.ties_verified += 1;
            self.anchors[i].stage = Stage::Tied;
            self.world.anchors[i].status = AnchorStatus::Tied(ci);
            self.world.anchors[i].velocity = Vec3::zeros();
        } else {
            self.fail(format!("anchor {i} did not tie to {}", cyl.name));
        }
    }

    fn recognition_done(&mut self) -> bool {
        let rc = &self.cfg.recognition;
        let mut ready = Vec::new();
        for (i, a) in self.cfg.anchors.iter().enumerate() {
            let cyl = &self.world.cylinders[self.anchors[i].cylinder];
            let center = cyl.center();
            // the designated track is the most confident one near the chosen cylinder
            let best = self
                .targets
                .tracks
                .iter()
                .filter(|t| (t.pose.position - center).norm() <= rc.designation_radius)
                .filter(|t| t.trace() < rc.ready_trace)
                .min_by(|x, y| x.trace().total_cmp(&y.trace()));
            match best {
                Some(t) => ready.push((i, a.target.clone(), t.id, t.trace())),
                None => return false,
            }
        }
        let mut announced = std::collections::BTreeSet::new();
        for (i, name, id, trace) in ready {
            self.designations[i] = Some(id);
            if announced.insert(id) {
                self.emit(EventKind::TargetReady {
                    cylinder: name,
                    track: id,
                    trace,
                });
            }
        }
        true
    }

    fn update_phase(&mut self) {
        let now = self.now();
        let budgets = self.cfg.budgets;
        match self.phase {
            Phase::Recognize => {
                if self.recognition_done() {
                    self.set_phase(Phase::Launch);
                    self.takeoff(0);
                } else if now - self.phase_started >= budgets.recognize {
                    self.timeout(Phase::Recognize);
                }
            }
            Phase::Launch => {
                let Some(i) = self.anchors.iter().position(|a| a.stage == Stage::Launching) else {
                    return;
                };
                let rt = &self.anchors[i];
                let belief = rt.belief.as_ref().expect("launching anchors have beliefs");
                let settled = (belief.position() - rt.hover).norm() <= self.cfg.launch.settle_tolerance;
                if belief.camera_fixes_accepted >= self.cfg.launch.min_fixes && settled {
                    let fixes = belief.camera_fixes_accepted;
                    self.anchors[i].stage = Stage::Waiting;
                    self.emit(EventKind::Launched {
                        anchor: i as u32,
                        fixes,
                    });
                    if i + 1 < self.anchors.len() {
                        self.takeoff(i + 1);
                    } else {
                        self.set_phase(Phase::Tie);
                        if self.cfg.tying.concurrent {
                            for k in 0..self.anchors.len() {
                                self.start_tying(k);
                            }
                        } else {
                            self.start_tying(0);
                        }
                    }
                } else if now - rt.stage_started >= budgets.launch {
                    self.timeout(Phase::Launch);
                }
            }
            Phase::Tie => {
                for i in 0..self.anchors.len() {
                    if self.anchors[i].stage == Stage::Tying && self.anchors[i].follow.is_done() {
                        self.finish_tie(i);
                        if self.phase == Phase::Failed {
                            return;
                        }
                        if !self.cfg.tying.concurrent {
                            if let Some(k) = self.anchors.iter().position(|a| a.stage == Stage::Waiting) {
                                self.start_tying(k);
                            }
                        }
                    }
                }
                if self.anchors.iter().all(|a| a.stage == Stage::Tied) {
                    self.set_phase(Phase::Tension);
                    let tension = match self.cfg.drive {
                        DrivePlan::Climb { pretension, .. } | DrivePlan::Maneuver { pretension, .. } => pretension,
                    };
                    for w in 0..self.anchors.len() {
                        self.emit(EventKind::TensionApplied { winch: w, tension });
                    }
                    return;
                }
                let overdue = self
                    .anchors
                    .iter()
                    .any(|a| a.stage == Stage::Tying && now - a.stage_started >= budgets.tie);
                if overdue {
                    self.timeout(Phase::Tie);
                }
            }
            Phase::Tension => {
                let hold = match self.cfg.drive {
                    DrivePlan::Climb { pretension_duration, .. }
                    | DrivePlan::Maneuver { pretension_duration, .. } => pretension_duration,
                };
                if now - self.phase_started >= hold {
                    self.set_phase(Phase::Drive);
                    self.drive_started = now;
                    self.drive_origin = self.world.robot.pose.position;
                    self.drive = match self.cfg.drive {
                        DrivePlan::Climb { .. } => DriveStep::Reel,
                        DrivePlan::Maneuver { .. } => DriveStep::Lift,
                    };
                    self.announce_drive_tensions();
                }
            }
            Phase::Drive => self.update_drive(now),
            Phase::Complete | Phase::Failed => {}
        }
    }

    fn announce_drive_tensions(&mut self) {
        let commands = self.winch_commands();
        for (w, c) in commands.iter().enumerate() {
            if c.tension > 0.0 {
                self.emit(EventKind::TensionApplied { winch: w, tension: c.tension });
            }
        }
    }

    fn update_drive(&mut self, now: f64) {
        let elapsed = now - self.drive_started;
        let pos = self.world.robot.pose.position;
        match (self.drive, self.cfg.drive.clone()) {
            (DriveStep::Reel, DrivePlan::Climb { duration, min_rise, .. }) => {
                if elapsed >= duration {
                    let rise = pos.z - self.robot_start.z;
                    if rise >= min_rise {
                        self.set_phase(Phase::Complete);
                    } else {
                        self.fail(format!("robot rose {rise:.3} m, needed {min_rise} m"));
                    }
                }
            }
            (DriveStep::Lift, DrivePlan::Maneuver { lift_duration, .. }) => {
                if elapsed >= lift_duration {
                    self.next_drive_step(DriveStep::Shift(0), now);
                }
            }
            (
                DriveStep::Shift(k),
                DrivePlan::Maneuver {
                    step_duration,
                    min_displacement,
                    ..
                },
            ) => {
                if elapsed >= step_duration {
                    let dir = Direction::ALL[k];
                    let displacement = (pos - self.drive_origin).dot(&dir.unit());
                    self.maneuvers.push((dir, displacement));
                    self.emit(EventKind::Maneuver {
                        direction: dir,
                        displacement,
                    });
                    if displacement < min_displacement {
                        self.fail(format!("{dir:?} moved {displacement:.3} m, needed {min_displacement} m"));
                    } else {
                        self.next_drive_step(DriveStep::Settle(k), now);
                    }
                }
            }
            (DriveStep::Settle(k), DrivePlan::Maneuver { step_duration, .. }) => {
                if elapsed >= step_duration {
                    if k + 1 < Direction::ALL.len() {
                        self.next_drive_step(DriveStep::Shift(k + 1), now);
                    } else {
                        self.set_phase(Phase::Complete);
                    }
                }
            }
            _ => {}
        }
    }

    fn next_drive_step(&mut self, step: DriveStep, now: f64) {
        self.drive = step;
        self.drive_started = now;
        self.drive_origin = self.world.robot.pose.position;
        self.announce_drive_tensions();
    }

    fn timeout(&mut self, phase: Phase) {
        self.emit(EventKind::PhaseTimeout { phase });
        self.fail(format!("{phase} phase timed out"));
    }

    // ---- camera pointing ---------------------------------------------------

    fn point_camera(&mut self) {
        let focus: Vec<usize> = self
            .anchors
            .iter()
            .enumerate()
            .filter(|(_, a)| matches!(a.stage, Stage::Launching | Stage::Tying))
            .map(|(i, _)| i)
            .collect();
        if focus.is_empty() {
            return;
        }
        let dwell = self.cfg.tying.camera_dwell_ticks.max(1) as u64;
        let i = focus[((self.tick / dwell) as usize) % focus.len()];
        let rt = &self.anchors[i];
        let point = match rt.stage {
            // keep the take-off axis in view until the first fix arrives
            Stage::Launching if rt.belief.as_ref().is_some_and(|b| b.camera_fixes_accepted == 0) => {
                let pad = rt.belief.as_ref().expect("launching").init_frame.position;
                let est = rt.belief.as_ref().expect("launching").position();
                Vec3::new(pad.x, pad.y, est.z.max(pad.z + 0.3))
            }
            _ => rt.belief.as_ref().expect("airborne").position(),
        };
        self.look_at(&point);
    }

    // ---- logging -------------------------------------------------------------

    fn record(&mut self) -> TickRecord {
        let anchors = (0..self.anchors.len())
            .map(|i| {
                let s = &self.world.anchors[i];
                let rt = &self.anchors[i];
                let b = rt.belief.as_ref();
                let wire_length = if s.status == AnchorStatus::Docked {
                    0.0
                } else {
                    update_wire(s, &self.world).total_length
                };
                AnchorRecord {
                    id: s.id,
                    status: s.status,
                    true_position: s.position,
                    true_velocity: s.velocity,
                    est_position: b.map(|b| b.position()),
                    est_velocity: b.map(|b| b.velocity()),
                    est_odom_offset: b.map(|b| b.odom_offset()),
                    est_phi: b.map(|b| b.phi().radians()),
                    est_variance: b.map(|b| b.covariance_diagonal().iter().copied().collect()),
                    active_waypoint: if rt.stage == Stage::Tying { rt.follow.active_index() } else { None },
                    command: rt.command,
                    wire_length,
                }
            })
            .collect();
        let targets = self
            .targets
            .tracks
            .iter()
            .map(|t| TrackRecord {
                id: t.id,
                position: t.pose.position,
                trace: t.trace(),
                hits: t.hit_count,
            })
            .collect();
        TickRecord {
            tick: self.tick,
            time: self.now(),
            phase: self.phase,
            camera: self.camera,
            robot: RobotRecord {
                position: self.world.robot.pose.position,
                velocity: self.world.robot.velocity,
                winch_lengths: self.world.robot.winches.iter().map(|w| w.deployed_length).collect(),
                winch_tensions: self.world.robot.winches.iter().map(|w| w.tension).collect(),
            },
            anchors,
            targets,
            events: std::mem::take(&mut self.events),
        }
    }

    /// One fixed-order tick: sense, estimate, plan, control, actuate, log.
    fn step(&mut self) -> TickRecord {
        match self.phase {
            Phase::Recognize => {
                self.recognize();
                self.targets.predict(self.dt);
            }
            Phase::Launch | Phase::Tie => {
                self.point_camera();
                let fixes = self.camera_fixes();
                self.estimate(&fixes);
                self.control();
            }
            _ => {
                let none = vec![None; self.anchors.len()];
                self.estimate(&none);
                self.control();
            }
        }
        self.actuate();
        if self.phase != Phase::Failed {
            self.check_proximity();
            self.update_phase();
        }
        let rec = self.record();
        self.tick += 1;
        rec
    }

    fn outcome(&self) -> Outcome {
        Outcome {
            completed: self.phase == Phase::Complete,
            final_phase: self.phase,
            failure: self.failure.clone().or_else(|| {
                (self.phase != Phase::Complete).then(|| format!("time limit reached in {} phase", self.phase))
            }),
            ties_verified: self.ties_verified,
            robot_rise: self.world.robot.pose.position.z - self.robot_start.z,
            maneuvers: self.maneuvers.clone(),
        }
    }
}

/// Runs the full mission until it completes, fails, or the scenario's time
/// limit runs out. Mission failures are reported in the log's outcome.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunLog, super::config::ConfigError> {
    cfg.validate()?;
    let mut m = Mission::new(cfg);
    let max_ticks = (cfg.duration * cfg.ticks_per_second as f64).round() as u64;
    let mut ticks = Vec::new();
    while m.tick < max_ticks && !matches!(m.phase, Phase::Complete | Phase::Failed) {
        ticks.push(m.step());
    }
    Ok(RunLog {
        header: LogHeader {
            scenario: cfg.name.clone(),
            seed: cfg.seed,
            ticks_per_second: cfg.ticks_per_second,
            anchor_count: cfg.anchors.len(),
        },
        ticks,
        outcome: m.outcome(),
    })
}
