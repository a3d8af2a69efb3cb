use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Vec3};

use super::{Cylinder, SimAnchor, WorldModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrapDirection {
    CounterClockwise,
    Clockwise,
}

/// Taut wire from the winch exit to the anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePolyline {
    /// Winch exit, tangent contacts (if wrapped), anchor.
    pub vertices: Vec<Vec3>,
    pub total_length: f64,
    /// Cylinder the wire is wrapped on and the arc angle in contact.
    pub wrap: Option<(usize, f64)>,
}

impl WirePolyline {
    /// Unit vector along the wire where it leaves the robot.
    pub fn direction_at_robot(&self) -> Vec3 {
        let d = self.vertices[1] - self.vertices[0];
        let n = d.norm();
        if n > 1e-12 {
            d / n
        } else {
            Vec3::zeros()
        }
    }
}

/// Length of the shortest path between `a` and `b` (relative to the circle
/// center) that sweeps around the center in `direction`, adding
/// `full_turns` complete loops. The path is straight when that segment
/// already clears the circle. Points inside the circle are treated as
/// lying on it.
pub fn geodesic_around_circle(
    a: &Vector2<f64>,
    b: &Vector2<f64>,
    r: f64,
    direction: WrapDirection,
    full_turns: u32,
) -> f64 {
    let (alpha_a, alpha_b) = (a.y.atan2(a.x), b.y.atan2(b.x));
    let swept = match direction {
        WrapDirection::CounterClockwise => alpha_b - alpha_a,
        WrapDirection::Clockwise => alpha_a - alpha_b,
    };
    let winding = swept.rem_euclid(std::f64::consts::TAU) + std::f64::consts::TAU * full_turns as f64;
    let (da, db) = (a.norm(), b.norm());
    let arc = contact_arc(da, db, r, winding);
    if arc <= 0.0 {
        return (b - a).norm();
    }
    tangent_length(da.max(r), r) + tangent_length(db.max(r), r) + r * arc
}

fn tangent_length(d: f64, r: f64) -> f64 {
    (d * d - r * r).max(0.0).sqrt()
}

/// Orthonormal basis (e1, e2) of the plane normal to the cylinder axis.
fn normal_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let seed = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let e1 = seed.cross(axis).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

struct Projected {
    planar: Vector2<f64>,
    axial: f64,
}

fn project(cyl: &Cylinder, p: &Vec3) -> Projected {
    let axis = cyl.axis();
    let (e1, e2) = normal_basis(&axis);
    let rel = p - cyl.p0;
    Projected {
        planar: Vector2::new(rel.dot(&e1), rel.dot(&e2)),
        axial: rel.dot(&axis),
    }
}

/// Angle of `anchor` about the cylinder axis relative to `exit`, in the
/// plane normal to the axis.
pub fn relative_axis_angle(cyl: &Cylinder, exit: &Vec3, anchor: &Vec3) -> f64 {
    let a = project(cyl, exit).planar;
    let b = project(cyl, anchor).planar;
    wrap_angle(b.y.atan2(b.x) - a.y.atan2(a.x))
}

/// Whether the wire can hold a wrap on this cylinder: both ends within the
/// axial extent of the segment.
fn wrappable(cyl: &Cylinder, exit: &Vec3, anchor: &Vec3) -> bool {
    let len = cyl.length();
    let (pe, pa) = (project(cyl, exit), project(cyl, anchor));
    (0.0..=len).contains(&pa.axial) && pe.axial > -len && pe.axial < 2.0 * len
}

/// Continues each per-cylinder wire winding to the anchor's new position.
/// Windings slip back to the principal value when the wire end leaves the
/// cylinder's extent.
pub fn track_windings(anchor: &mut SimAnchor, exit: &Vec3, world: &WorldModel) {
    anchor.wire_windings.resize(world.cylinders.len(), 0.0);
    for (w, cyl) in anchor.wire_windings.iter_mut().zip(&world.cylinders) {
        let principal = relative_axis_angle(cyl, exit, &anchor.position);
        if wrappable(cyl, exit, &anchor.position) {
            *w += wrap_angle(principal - *w);
        } else {
            *w = principal;
        }
    }
}

/// Starts the windings from a straight wire.
pub fn reset_windings(anchor: &mut SimAnchor, exit: &Vec3, world: &WorldModel) {
    anchor.wire_windings = world
        .cylinders
        .iter()
        .map(|c| relative_axis_angle(c, exit, &anchor.position))
        .collect();
}

/// Arc of wire in contact with the cylinder for a given winding; zero or
/// negative means the straight segment clears it.
fn contact_arc(da: f64, db: f64, r: f64, winding: f64) -> f64 {
    winding.abs() - (r / da.max(r)).acos() - (r / db.max(r)).acos()
}

/// Taut wire from the robot's winch exit to the anchor. The wire wraps the
/// cylinder with the largest contact arc implied by the tracked winding;
/// the wrapped section is a helix, so the length unrolls to
/// `sqrt(planar² + axial²)`.
pub fn update_wire(anchor: &SimAnchor, world: &WorldModel) -> WirePolyline {
    let exit = world.winch_exit(anchor.winch);
    let end = anchor.position;
    let straight = WirePolyline {
        vertices: vec![exit, end],
        total_length: (end - exit).norm(),
        wrap: None,
    };

    let mut best: Option<(usize, f64)> = None;
    for (ci, cyl) in world.cylinders.iter().enumerate() {
        if !wrappable(cyl, &exit, &end) {
            continue;
        }
        let winding = anchor
            .wire_windings
            .get(ci)
            .copied()
            .unwrap_or_else(|| relative_axis_angle(cyl, &exit, &end));
        let (pe, pa) = (project(cyl, &exit), project(cyl, &end));
        let arc = contact_arc(pe.planar.norm(), pa.planar.norm(), cyl.radius, winding);
        if arc > 1e-9 && best.is_none_or(|(_, b)| arc > b) {
            best = Some((ci, arc));
        }
    }
    let Some((ci, arc)) = best else {
        return straight;
    };

    let cyl = &world.cylinders[ci];
    let r = cyl.radius;
    let axis = cyl.axis();
    let (e1, e2) = normal_basis(&axis);
    let (pe, pa) = (project(cyl, &exit), project(cyl, &end));
    let (de, da) = (pe.planar.norm().max(r), pa.planar.norm().max(r));
    let (te, ta) = (tangent_length(de, r), tangent_length(da, r));
    let planar = te + ta + r * arc;
    let axial = pa.axial - pe.axial;
    let total_length = planar.hypot(axial);

    // tangent contact points, placed along the helix
    let sign = anchor.wire_windings.get(ci).copied().unwrap_or(0.0).signum();
    let sign = if sign == 0.0 { 1.0 } else { sign };
    let beta = pe.planar.y.atan2(pe.planar.x) + sign * (r / de).acos();
    let gamma = beta + sign * arc;
    let frac = |s: f64| if planar > 0.0 { s / planar } else { 0.0 };
    let contact = |angle: f64, along: f64| {
        cyl.p0 + e1 * (r * angle.cos()) + e2 * (r * angle.sin()) + axis * (pe.axial + axial * frac(along))
    };
    WirePolyline {
        vertices: vec![exit, contact(beta, te), contact(gamma, te + r * arc), end],
        total_length,
        wrap: Some((ci, arc)),
    }
}
