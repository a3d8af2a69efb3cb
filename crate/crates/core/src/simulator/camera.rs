use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, Pose, Quat, Vec3};
use crate::perception::{BoundingBox, DepthImage, DetectionLabel, Intrinsics};

use super::{Cylinder, WorldModel};

/// Anchors render as spheres of this radius, m.
pub const ANCHOR_BODY_RADIUS: f64 = 0.1;
const NEAR_PLANE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    /// Camera center in the robot frame.
    pub mount_offset: Vec3,
    /// Depth noise coefficient: σ = coefficient · d², 1/m.
    pub depth_noise: f64,
    pub max_range: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            intrinsics: Intrinsics {
                fx: 260.0,
                fy: 260.0,
                cx: 160.0,
                cy: 120.0,
            },
            mount_offset: Vec3::new(0.0, 0.0, 0.6),
            depth_noise: 0.005,
            max_range: 8.0,
        }
    }
}

/// Synthetic stand-in for the learned detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    pub center_jitter_px: f64,
    /// Relative σ of box width and height.
    pub scale_jitter: f64,
    pub false_negative_rate: f64,
    /// Probability that a whole frame yields no detections.
    pub frame_dropout: f64,
    /// Objects with fewer visible pixels are never detected.
    pub min_pixels: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            center_jitter_px: 3.0,
            scale_jitter: 0.05,
            false_negative_rate: 0.1,
            frame_dropout: 0.02,
            min_pixels: 6,
        }
    }
}

impl DetectorParams {
    pub fn perfect() -> Self {
        Self {
            center_jitter_px: 0.0,
            scale_jitter: 0.0,
            false_negative_rate: 0.0,
            frame_dropout: 0.0,
            min_pixels: 1,
        }
    }
}

/// Camera pose for a pan/tilt head: `yaw` about world z, `pitch` positive
/// upward. Camera axes: x right, y down, z forward.
pub fn camera_pose(position: Vec3, yaw: f64, pitch: f64) -> Pose {
    let forward = Vec3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin());
    let right = Vec3::new(yaw.sin(), -yaw.cos(), 0.0);
    let down = forward.cross(&right);
    let rot = nalgebra::Rotation3::from_matrix_unchecked(Mat3::from_columns(&[right, down, forward]));
    Pose::new(position, Quat::from_rotation_matrix(&rot))
}

/// Pan/tilt angles that center `target` as seen from `position`.
pub fn aim_camera(position: &Vec3, target: &Vec3) -> (f64, f64) {
    let d = target - position;
    (d.y.atan2(d.x), d.z.atan2(d.x.hypot(d.y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderHit {
    Cylinder(usize),
    Anchor(usize),
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub image: DepthImage,
    pub hits: Vec<Option<RenderHit>>,
}

/// Smallest positive ray parameter hitting the lateral surface of a finite
/// cylinder. Ray points are `o + t·d`.
fn ray_cylinder(o: &Vec3, d: &Vec3, cyl: &Cylinder) -> Option<f64> {
    let a = cyl.p1 - cyl.p0;
    let len = a.norm();
    let axis = a / len;
    let oc = o - cyl.p0;
    let d_perp = d - axis * d.dot(&axis);
    let oc_perp = oc - axis * oc.dot(&axis);
    let qa = d_perp.norm_squared();
    if qa < 1e-18 {
        return None;
    }
    let qb = 2.0 * d_perp.dot(&oc_perp);
    let qc = oc_perp.norm_squared() - cyl.radius * cyl.radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
        if t > NEAR_PLANE {
            let s = (oc + d * t).dot(&axis);
            if (0.0..=len).contains(&s) {
                return Some(t);
            }
        }
    }
    None
}

fn ray_sphere(o: &Vec3, d: &Vec3, center: &Vec3, r: f64) -> Option<f64> {
    let oc = o - center;
    let qa = d.norm_squared();
    let qb = 2.0 * d.dot(&oc);
    let qc = oc.norm_squared() - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)]
        .into_iter()
        .find(|t| *t > NEAR_PLANE)
}

/// Pixel rectangle (inclusive min, exclusive max) that can contain the
/// projection of a set of camera-frame points inflated by `radius`.
fn screen_rect(cam: &CameraModel, pts_cam: &[Vec3], radius: f64) -> Option<(usize, usize, usize, usize)> {
    let k = &cam.intrinsics;
    let full = Some((0, 0, cam.width, cam.height));
    if pts_cam.iter().all(|p| p.z < -radius) {
        return None;
    }
    if pts_cam.iter().any(|p| p.z <= radius + NEAR_PLANE) {
        return full;
    }
    let (mut u0, mut v0, mut u1, mut v1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in pts_cam {
        let (u, v) = k.project(p)?;
        let pad_u = k.fx * radius / (p.z - radius) + 2.0;
        let pad_v = k.fy * radius / (p.z - radius) + 2.0;
        u0 = u0.min(u - pad_u);
        u1 = u1.max(u + pad_u);
        v0 = v0.min(v - pad_v);
        v1 = v1.max(v + pad_v);
    }
    let clamp = |x: f64, hi: usize| x.max(0.0).min(hi as f64) as usize;
    let r = (
        clamp(u0.floor(), cam.width),
        clamp(v0.floor(), cam.height),
        clamp(u1.ceil() + 1.0, cam.width),
        clamp(v1.ceil() + 1.0, cam.height),
    );
    (r.0 < r.2 && r.1 < r.3).then_some(r)
}

/// Cylinder axis clipped to the half-space in front of the camera.
fn clipped_axis(pose: &Pose, cyl: &Cylinder) -> Option<Vec<Vec3>> {
    let a = pose.inverse_transform_point(&cyl.p0);
    let b = pose.inverse_transform_point(&cyl.p1);
    let near = NEAR_PLANE + cyl.radius + 1e-3;
    if a.z < near && b.z < near {
        // fully behind or grazing the camera: let the caller decide
        return if a.z < -cyl.radius && b.z < -cyl.radius { None } else { Some(vec![a, b]) };
    }
    let clip = |p: Vec3, q: Vec3| {
        if p.z >= near {
            p
        } else {
            p + (q - p) * ((near - p.z) / (q.z - p.z))
        }
    };
    Some(vec![clip(a, b), clip(b, a)])
}

/// Exact z-buffer render of cylinders and airborne or tied anchor spheres.
/// Docked anchors sit inside their pads and are not drawn. Depth is along
/// the optical axis.
pub fn render_depth(world: &WorldModel, cam: &CameraModel, pose: &Pose) -> RenderedFrame {
    let mut image = DepthImage::new(cam.width, cam.height, cam.intrinsics);
    let mut hits = vec![None; cam.width * cam.height];
    let rot = pose.rotation_matrix();
    let origin = pose.position;
    let k = cam.intrinsics;

    let mut draw = |rect: (usize, usize, usize, usize), hit: RenderHit, f: &dyn Fn(&Vec3) -> Option<f64>| {
        for v in rect.1..rect.3 {
            for u in rect.0..rect.2 {
                let d = rot * k.ray(u as f64, v as f64);
                if let Some(t) = f(&d) {
                    if t > cam.max_range {
                        continue;
                    }
                    let i = v * cam.width + u;
                    if image.depth[i] == 0.0 || t < image.depth[i] {
                        image.depth[i] = t;
                        hits[i] = Some(hit);
                    }
                }
            }
        }
    };

    for (ci, cyl) in world.cylinders.iter().enumerate() {
        let Some(pts) = clipped_axis(pose, cyl) else {
            continue;
        };
        let Some(rect) = screen_rect(cam, &pts, cyl.radius) else {
            continue;
        };
        draw(rect, RenderHit::Cylinder(ci), &|d| ray_cylinder(&origin, d, cyl));
    }
    for (ai, anchor) in world.anchors.iter().enumerate() {
        if anchor.status == super::AnchorStatus::Docked {
            continue;
        }
        let c = pose.inverse_transform_point(&anchor.position);
        let Some(rect) = screen_rect(cam, &[c], ANCHOR_BODY_RADIUS) else {
            continue;
        };
        let center = anchor.position;
        draw(rect, RenderHit::Anchor(ai), &|d| ray_sphere(&origin, d, &center, ANCHOR_BODY_RADIUS));
    }
    RenderedFrame { image, hits }
}

/// Renders a noisy depth image and runs the synthetic detector over the
/// visible silhouettes.
pub fn sense_camera<R: Rng + ?Sized>(
    world: &WorldModel,
    cam: &CameraModel,
    pose: &Pose,
    detector: &DetectorParams,
    noisy: bool,
    rng: &mut R,
) -> (DepthImage, Vec<BoundingBox>) {
    let RenderedFrame { mut image, hits } = render_depth(world, cam, pose);

    // silhouettes from the exact z-buffer
    let n_cyl = world.cylinders.len();
    let mut rects: Vec<Option<(usize, usize, usize, usize, usize)>> = vec![None; n_cyl + world.anchors.len()];
    for v in 0..cam.height {
        for u in 0..cam.width {
            let Some(hit) = hits[v * cam.width + u] else {
                continue;
            };
            let slot = match hit {
                RenderHit::Cylinder(i) => i,
                RenderHit::Anchor(i) => n_cyl + i,
            };
            let r = rects[slot].get_or_insert((u, v, u, v, 0));
            r.0 = r.0.min(u);
            r.1 = r.1.min(v);
            r.2 = r.2.max(u);
            r.3 = r.3.max(v);
            r.4 += 1;
        }
    }

    if noisy && cam.depth_noise > 0.0 {
        let unit = Normal::new(0.0, 1.0).unwrap();
        for d in image.depth.iter_mut().filter(|d| **d > 0.0) {
            let sigma = cam.depth_noise * *d * *d;
            *d = (*d + sigma * unit.sample(rng)).max(1e-3);
        }
    }

    let mut boxes = Vec::new();
    let dropped = noisy && detector.frame_dropout > 0.0 && rng.random::<f64>() < detector.frame_dropout;
    for (slot, rect) in rects.iter().enumerate() {
        let Some((u0, v0, u1, v1, count)) = *rect else {
            continue;
        };
        let label = if slot < n_cyl {
            match world.cylinders[slot].label.detection_label() {
                Some(l) => l,
                None => continue,
            }
        } else {
            DetectionLabel::Anchor
        };
        if count < detector.min_pixels {
            continue;
        }
        // consume randomness identically whether or not the frame dropped
        let miss = rng.random::<f64>() < detector.false_negative_rate;
        let mut cu = 0.5 * (u0 as f64 + u1 as f64 + 1.0);
        let mut cv = 0.5 * (v0 as f64 + v1 as f64 + 1.0);
        let mut w = (u1 - u0 + 1) as f64;
        let mut h = (v1 - v0 + 1) as f64;
        if noisy {
            let n = Normal::new(0.0, 1.0).unwrap();
            cu += detector.center_jitter_px * n.sample(rng);
            cv += detector.center_jitter_px * n.sample(rng);
            w *= (1.0 + detector.scale_jitter * n.sample(rng)).max(0.5);
            h *= (1.0 + detector.scale_jitter * n.sample(rng)).max(0.5);
        }
        if (noisy && miss) || dropped {
            continue;
        }
        let b = BoundingBox {
            u_min: (cu - 0.5 * w).max(0.0),
            v_min: (cv - 0.5 * h).max(0.0),
            u_max: (cu + 0.5 * w).min(cam.width as f64),
            v_max: (cv + 0.5 * h).min(cam.height as f64),
            label,
        };
        if b.u_min < b.u_max && b.v_min < b.v_max {
            boxes.push(b);
        }
    }
    (image, boxes)
}
