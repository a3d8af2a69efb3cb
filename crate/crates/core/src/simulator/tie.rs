use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Vec3};

use super::{Cylinder, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TieVerdict {
    pub success: bool,
    /// Signed winding about the bar axis, rad.
    pub winding: f64,
    /// Height of the final point below the bar axis, m (negative when above).
    pub final_drop: f64,
}

/// Signed angle swept about the cylinder axis by the path projected into
/// the plane normal to the axis. Positive is counterclockwise looking down
/// the axis from `p1` toward `p0`.
pub fn winding_about_axis(path: &[Vec3], bar: &Cylinder) -> Result<f64, SimError> {
    if path.len() < 2 {
        return Err(SimError::PathTooShort);
    }
    let axis = bar.axis();
    let radial = |p: &Vec3| {
        let rel = p - bar.p0;
        rel - axis * rel.dot(&axis)
    };
    let mut total = 0.0;
    let mut prev: Option<Vec3> = None;
    let mut any = false;
    for p in path {
        let r = radial(p);
        if r.norm() <= 1e-6 {
            continue;
        }
        any = true;
        if let Some(q) = prev {
            total += wrap_angle(q.cross(&r).dot(&axis).atan2(q.dot(&r)));
        }
        prev = Some(r);
    }
    if !any {
        return Err(SimError::DegeneratePath);
    }
    Ok(total)
}

/// A tie holds when the path encircles the bar at least once and ends
/// jammed at least one radius below the axis.
pub fn verify_tie(path: &[Vec3], bar: &Cylinder) -> Result<TieVerdict, SimError> {
    let winding = winding_about_axis(path, bar)?;
    let last = path[path.len() - 1];
    let final_drop = bar.closest_axis_point(&last).z - last.z;
    Ok(TieVerdict {
        success: winding.abs() >= std::f64::consts::TAU && final_drop >= bar.radius,
        winding,
        final_drop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::planner::{plan_tying, TyingShape};
    use crate::simulator::ObjectLabel;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn bar() -> Cylinder {
        Cylinder {
            name: "bar".into(),
            p0: Vec3::new(0.0, -1.0, 2.0),
            p1: Vec3::new(0.0, 1.0, 2.0),
            radius: 0.03,
            label: ObjectLabel::Bar,
        }
    }

    /// Densely resamples a polyline so every step subtends a small angle.
    fn densify(points: &[Vec3], n: usize) -> Vec<Vec3> {
        let mut out = vec![points[0]];
        for w in points.windows(2) {
            for i in 1..=n {
                out.push(w[0] + (w[1] - w[0]) * (i as f64 / n as f64));
            }
        }
        out
    }

    #[test]
    fn flyby_fails() {
        let path = [Vec3::new(2.0, -0.5, 1.5), Vec3::new(2.0, 0.5, 2.5)];
        let v = verify_tie(&path, &bar()).unwrap();
        assert!(v.winding.abs() < FRAC_PI_2);
        assert!(!v.success);
    }

    #[test]
    fn short_and_degenerate_paths() {
        assert_eq!(verify_tie(&[Vec3::zeros()], &bar()), Err(SimError::PathTooShort));
        let on_axis = [Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 0.5, 2.0)];
        assert_eq!(verify_tie(&on_axis, &bar()), Err(SimError::DegeneratePath));
    }

    #[test]
    fn full_circle_below_succeeds() {
        let path: Vec<Vec3> = (0..=100)
            .map(|i| {
                let a = -FRAC_PI_2 + 1.3 * TAU * i as f64 / 100.0;
                Vec3::new(0.5 * a.cos(), 0.0, 2.0 + 0.5 * a.sin())
            })
            .collect();
        let v = verify_tie(&path, &bar()).unwrap();
        assert!((v.winding.abs() - 1.3 * TAU).abs() < 1e-9);
        assert!(!v.success, "final point is above the axis");
        let mut more = path.clone();
        more.push(Vec3::new(0.3, 0.0, 1.5));
        assert!(verify_tie(&more, &bar()).unwrap().success);
    }

    #[test]
    fn planned_paths_tie_both_ways() {
        let b = bar();
        // target frame: x toward the robot (+x), y along the bar, z up
        let target = Pose::from_axes(b.center(), Vec3::x(), Vec3::y(), Vec3::z());
        let shape = TyingShape::default();
        let mut windings = Vec::new();
        for mirrored in [false, true] {
            let traj = plan_tying(0, mirrored, &shape);
            let path = densify(&traj.world_waypoints(&target), 20);
            let v = verify_tie(&path, &b).unwrap();
            assert!(v.success, "mirrored={mirrored} {v:?}");
            assert!(v.winding.abs() >= TAU);
            windings.push(v.winding);
        }
        // reflection across the plane containing the bar-normal leaves the
        // projection normal to the bar unchanged
        assert!((windings[0] - windings[1]).abs() < 1e-9);
    }
}
