use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wiretie::anchor_estimator::{
    ekf_predict, ekf_update, AnchorBelief, NoiseConfig, NoiseParams, ObservationBundle, PriorParams,
};
use wiretie::controller::Command;
use wiretie::simulator::{
    reset_windings, step_anchor, step_robot, update_wire, verify_tie, winding_about_axis, AnchorStatus, Cylinder,
    ObjectLabel, RobotBody, SimAnchor, Winch, WinchCommand, WorldModel, MAX_REEL_RATE,
};
use wiretie::{Pose, Vec3, YawAngle};

fn arb_vec(lo: f64, hi: f64) -> impl Strategy<Value = Vec3> {
    (lo..hi, lo..hi, lo..hi).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn min_eigenvalue(belief: &AnchorBelief) -> f64 {
    belief.p.symmetric_eigenvalues().min()
}

fn bar() -> Cylinder {
    Cylinder {
        name: "bar".into(),
        p0: Vec3::new(1.5, -1.0, 3.0),
        p1: Vec3::new(1.5, 1.0, 3.0),
        radius: 0.05,
        label: ObjectLabel::Bar,
    }
}

/// Robot at the origin with one wire running to an anchor at `anchor`.
fn tethered(anchor: Vec3, cylinders: Vec<Cylinder>) -> WorldModel {
    let mut robot = RobotBody::default();
    robot.winches = vec![Winch::at(Vec3::new(0.0, 0.0, 0.5))];
    let mut world = WorldModel {
        cylinders,
        robot,
        anchors: vec![],
        gravity: 9.81,
        ground_height: 0.0,
        rng_seed: 0,
    };
    let mut a = SimAnchor::new(0, anchor, YawAngle::new(0.0), 0);
    a.status = AnchorStatus::Tied(0);
    let exit = world.winch_exit(0);
    reset_windings(&mut a, &exit, &world);
    world.anchors.push(a);
    let len = update_wire(&world.anchors[0], &world).total_length;
    world.robot.winches[0].deployed_length = len;
    world
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_stays_symmetric_positive_definite(
        seed in any::<u64>(),
        steps in 1usize..60,
        dt in 0.01..0.2f64,
        mask in 0u8..16,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = NoiseConfig::from_params(&NoiseParams::default(), dt);
        let mut b = AnchorBelief::new(0, Pose::from_position(Vec3::new(0.0, 0.0, 1.0)), &PriorParams::default());
        for _ in 0..steps {
            b = ekf_predict(&b, dt, &noise);
            let r = |rng: &mut ChaCha8Rng| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..3.0));
            let mut z = ObservationBundle {
                camera_fix: (mask & 1 != 0).then(|| r(&mut rng)),
                odom_position: (mask & 2 != 0).then(|| r(&mut rng)),
                odom_velocity: (mask & 4 != 0).then(|| r(&mut rng) * 0.3),
                odom_yaw: (mask & 8 != 0).then(|| YawAngle::new(rng.random_range(-3.0..3.0))),
            };
            if z.is_empty() {
                z.camera_fix = Some(r(&mut rng));
            }
            b = ekf_update(&b, &z, &noise).unwrap();
            prop_assert!((b.p - b.p.transpose()).norm() < 1e-12);
            prop_assert!(min_eigenvalue(&b) > 0.0);
        }
    }

    #[test]
    fn updates_never_increase_variance(fix in arb_vec(-2.0, 2.0)) {
        let noise = NoiseConfig::from_params(&NoiseParams::default(), 0.05);
        let b = AnchorBelief::new(0, Pose::from_position(Vec3::new(0.0, 0.0, 1.0)), &PriorParams::default());
        let b = ekf_predict(&b, 0.05, &noise);
        let after = ekf_update(&b, &ObservationBundle::camera(fix), &noise).unwrap();
        let d0 = b.covariance_diagonal();
        let d1 = after.covariance_diagonal();
        for i in 0..d0.len() {
            prop_assert!(d1[i] <= d0[i] + 1e-12);
        }
    }

    #[test]
    fn anchor_never_leaves_wire_sphere(
        seed in any::<u64>(),
        start in arb_vec(-1.0, 1.0),
        cmds in prop::collection::vec(arb_vec(-100.0, 100.0), 1..80),
        length in 0.3..3.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attach = Vec3::zeros();
        let mut a = SimAnchor::new(0, start.normalize() * start.norm().min(length), YawAngle::new(0.3), 0);
        a.status = AnchorStatus::Flying;
        a.wire_attach_point = attach;
        a.wire_deployed_length = length;
        for c in cmds {
            a = step_anchor(&a, &Command { cx: c.x, cy: c.y, cz: c.z }, 0.5, &mut rng);
            prop_assert!((a.position - attach).norm() <= length + 1e-9);
        }
    }

    #[test]
    fn reeling_never_pays_out(
        anchor in arb_vec(-2.0, 2.0),
        tension in 0.0..180.0f64,
        rate in 0.0..MAX_REEL_RATE,
        steps in 1usize..60,
    ) {
        let mut world = tethered(anchor + Vec3::new(0.0, 0.0, 3.0), vec![bar()]);
        let cmd = [WinchCommand::reel(tension, rate)];
        for _ in 0..steps {
            let before = world.robot.winches[0].deployed_length;
            world = step_robot(&world, &cmd, 0.05).unwrap();
            let after = world.robot.winches[0].deployed_length;
            prop_assert!(after <= before + 1e-12);
            prop_assert!(after >= before - rate * 0.05 - 1e-12);
            prop_assert!(world.robot.pose.position.z >= world.ground_height);
        }
    }

    #[test]
    fn wire_never_shorter_than_straight_line(anchor in arb_vec(-2.0, 2.0)) {
        let world = tethered(anchor + Vec3::new(2.0, 0.0, 3.5), vec![bar()]);
        let wire = update_wire(&world.anchors[0], &world);
        let straight = (world.anchors[0].position - world.winch_exit(0)).norm();
        prop_assert!(wire.total_length >= straight - 1e-9);
        let polyline: f64 = wire.vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        prop_assert!(polyline <= wire.total_length + 1e-9);
    }

    #[test]
    fn reversed_path_negates_winding(
        points in prop::collection::vec(arb_vec(-1.0, 1.0), 2..30),
    ) {
        let b = bar();
        let path: Vec<Vec3> = points.iter().map(|p| b.center() + p).collect();
        let Ok(w) = winding_about_axis(&path, &b) else { return Ok(()) };
        let reversed: Vec<Vec3> = path.iter().rev().copied().collect();
        let wr = winding_about_axis(&reversed, &b).unwrap();
        prop_assert!((w + wr).abs() < 1e-9);
        let v = verify_tie(&path, &b).unwrap();
        prop_assert_eq!(v.success, w.abs() >= std::f64::consts::TAU && v.final_drop >= b.radius);
    }
}
