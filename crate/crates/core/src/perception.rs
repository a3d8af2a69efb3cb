//! Depth-image point cloud pipeline used for both attachment targets and
//! flying anchors: box masking, back-projection, voxel downsampling,
//! Euclidean clustering, and either PCA frame fitting or centroid extraction.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Read, Write};

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Mat3, Pose, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("bounding box is empty after shrinking")]
    EmptyMask,
    #[error("bounding box {0:?} does not overlap the image")]
    InvalidBox(BoundingBox),
    #[error("cluster has no dominant axis or its axis is near vertical: {0}")]
    DegenerateCloud(String),
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("no cluster survived filtering")]
    NoCluster,
}

/// Pinhole parameters in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Projects a camera-frame point (x right, y down, z forward). Returns
    /// `None` behind the image plane.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 1e-9 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Unit-depth ray through pixel coordinates `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Row-major depth map in meters; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, intrinsics: Intrinsics) -> Self {
        Self {
            width,
            height,
            intrinsics,
            depth: vec![0.0; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, d: f64) {
        self.depth[v * self.width + u] = d;
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| **d > 0.0).count()
    }

    /// Writes the golden-file layout: little-endian `u64` width and height,
    /// `f64` fx, fy, cx, cy, then row-major `f64` depths.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.width as u64).to_le_bytes())?;
        w.write_all(&(self.height as u64).to_le_bytes())?;
        for v in [
            self.intrinsics.fx,
            self.intrinsics.fy,
            self.intrinsics.cx,
            self.intrinsics.cy,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for d in &self.depth {
            w.write_all(&d.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let mut buf = [0u8; 8];
        let mut next = |r: &mut R| -> io::Result<[u8; 8]> {
            r.read_exact(&mut buf)?;
            Ok(buf)
        };
        let width = u64::from_le_bytes(next(&mut r)?) as usize;
        let height = u64::from_le_bytes(next(&mut r)?) as usize;
        let mut k = [0.0; 4];
        for slot in &mut k {
            *slot = f64::from_le_bytes(next(&mut r)?);
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "image size overflow"))?;
        let mut depth = Vec::with_capacity(n);
        for _ in 0..n {
            let d = f64::from_le_bytes(next(&mut r)?);
            if !d.is_finite() || d < 0.0 {
                return Err(io::Error::new(io::ErrorKind::InvalidData, "invalid depth value"));
            }
            depth.push(d);
        }
        Ok(Self {
            width,
            height,
            intrinsics: Intrinsics {
                fx: k[0],
                fy: k[1],
                cx: k[2],
                cy: k[3],
            },
            depth,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionLabel {
    Bar,
    Branch,
    Anchor,
}

impl DetectionLabel {
    /// Whether a wire can be tied to objects with this label.
    pub fn is_attachable(self) -> bool {
        matches!(self, DetectionLabel::Bar | DetectionLabel::Branch)
    }
}

/// Axis-aligned pixel box, half-open: `[u_min, u_max) × [v_min, v_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub label: DetectionLabel,
}

impl BoundingBox {
    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.u_min + self.u_max),
            0.5 * (self.v_min + self.v_max),
        )
    }

    /// Box contracted toward its center so that it keeps `1 - shrink` of its
    /// width and height.
    pub fn shrunk(&self, shrink: f64) -> BoundingBox {
        let du = 0.5 * shrink * (self.u_max - self.u_min);
        let dv = 0.5 * shrink * (self.v_max - self.v_min);
        BoundingBox {
            u_min: self.u_min + du,
            v_min: self.v_min + dv,
            u_max: self.u_max - du,
            v_max: self.v_max - dv,
            label: self.label,
        }
    }

    pub fn contains_pixel(&self, u: usize, v: usize) -> bool {
        let (u, v) = (u as f64, v as f64);
        u >= self.u_min && u < self.u_max && v >= self.v_min && v < self.v_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CloudFrame {
    Camera,
    World,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub frame: CloudFrame,
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(frame: CloudFrame, points: Vec<Vec3>) -> Self {
        Self { frame, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        Some(sum / self.points.len() as f64)
    }
}

/// A candidate attachment frame fitted to one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetFrameEstimate {
    pub pose: Pose,
    pub point_count: usize,
    /// Largest over middle covariance eigenvalue.
    pub principal_ratio: f64,
    pub label: DetectionLabel,
}

/// Tuning for the cloud pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionParams {
    pub box_shrink: f64,
    pub voxel_size: f64,
    pub cluster_tolerance: f64,
    pub min_cluster_size: usize,
    pub min_principal_ratio: f64,
    /// Minimum angle between the principal axis and vertical, degrees.
    pub min_axis_tilt_deg: f64,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        Self {
            box_shrink: 0.2,
            voxel_size: 0.02,
            cluster_tolerance: 0.05,
            min_cluster_size: 10,
            min_principal_ratio: 1.5,
            min_axis_tilt_deg: 5.0,
        }
    }
}

/// Invalidates every pixel outside the box after shrinking it by `shrink`.
pub fn mask_depth(
    image: &DepthImage,
    bbox: &BoundingBox,
    shrink: f64,
) -> Result<DepthImage, PerceptionError> {
    let clamped = BoundingBox {
        u_min: bbox.u_min.max(0.0),
        v_min: bbox.v_min.max(0.0),
        u_max: bbox.u_max.min(image.width as f64),
        v_max: bbox.v_max.min(image.height as f64),
        label: bbox.label,
    };
    if clamped.u_min >= clamped.u_max || clamped.v_min >= clamped.v_max {
        return Err(PerceptionError::InvalidBox(*bbox));
    }
    let region = clamped.shrunk(shrink.clamp(0.0, 1.0));
    // Empty when no pixel index fits inside the half-open range.
    let has_u = region.u_min.ceil() < region.u_max;
    let has_v = region.v_min.ceil() < region.v_max;
    if !(has_u && has_v) {
        return Err(PerceptionError::EmptyMask);
    }

    let mut out = DepthImage::new(image.width, image.height, image.intrinsics);
    let u0 = region.u_min.ceil() as usize;
    let v0 = region.v_min.ceil() as usize;
    for v in v0..image.height {
        if (v as f64) >= region.v_max {
            break;
        }
        for u in u0..image.width {
            if (u as f64) >= region.u_max {
                break;
            }
            out.set(u, v, image.get(u, v));
        }
    }
    Ok(out)
}

/// Back-projects every valid pixel and maps it into world with `camera_pose`
/// (camera axes: x right, y down, z forward).
pub fn depth_to_cloud(image: &DepthImage, camera_pose: &Pose) -> PointCloud {
    let k = &image.intrinsics;
    let mut points = Vec::new();
    for v in 0..image.height {
        for u in 0..image.width {
            let d = image.get(u, v);
            if d > 0.0 {
                let local = Vec3::new(
                    (u as f64 - k.cx) * d / k.fx,
                    (v as f64 - k.cy) * d / k.fy,
                    d,
                );
                points.push(camera_pose.transform_point(&local));
            }
        }
    }
    PointCloud::new(CloudFrame::World, points)
}

fn voxel_key(p: &Vec3, voxel: f64) -> (i64, i64, i64) {
    (
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}

/// One centroid per occupied voxel, emitted in voxel-index order.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> PointCloud {
    assert!(voxel > 0.0, "voxel size must be positive");
    let mut cells: BTreeMap<(i64, i64, i64), (Vec3, usize)> = BTreeMap::new();
    for p in &cloud.points {
        let e = cells.entry(voxel_key(p, voxel)).or_insert((Vec3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    let points = cells
        .into_values()
        .map(|(sum, n)| sum / n as f64)
        .collect();
    PointCloud::new(cloud.frame, points)
}

/// Connected components of the graph joining points closer than
/// `tolerance`. Components smaller than `min_size` are dropped; the rest
/// are sorted by centroid distance to `reference`.
pub fn euclidean_cluster(
    cloud: &PointCloud,
    tolerance: f64,
    min_size: usize,
    reference: &Vec3,
) -> Vec<PointCloud> {
    assert!(tolerance > 0.0, "cluster tolerance must be positive");
    let pts = &cloud.points;
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        grid.entry(voxel_key(p, tolerance)).or_default().push(i);
    }

    let tol2 = tolerance * tolerance;
    let mut assigned = vec![false; pts.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut queue = Vec::new();
    for seed in 0..pts.len() {
        if assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        queue.clear();
        queue.push(seed);
        let mut members = Vec::new();
        while let Some(i) = queue.pop() {
            members.push(i);
            let (kx, ky, kz) = voxel_key(&pts[i], tolerance);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(cell) = grid.get(&(kx + dx, ky + dy, kz + dz)) else {
                            continue;
                        };
                        for &j in cell {
                            if !assigned[j] && (pts[j] - pts[i]).norm_squared() <= tol2 {
                                assigned[j] = true;
                                queue.push(j);
                            }
                        }
                    }
                }
            }
        }
        if members.len() >= min_size {
            // Input order inside a cluster keeps results permutation-stable
            // as sets and reproducible as sequences.
            members.sort_unstable();
            clusters.push(members);
        }
    }

    let mut out: Vec<(f64, PointCloud)> = clusters
        .into_iter()
        .map(|idx| {
            let c = PointCloud::new(cloud.frame, idx.into_iter().map(|i| pts[i]).collect());
            let d = (c.centroid().unwrap() - reference).norm();
            (d, c)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.into_iter().map(|(_, c)| c).collect()
}

/// Sample covariance (population normalization) about the centroid.
pub fn covariance(cloud: &PointCloud) -> Option<(Vec3, Mat3)> {
    let c = cloud.centroid()?;
    let mut cov = Mat3::zeros();
    for p in &cloud.points {
        let d = p - c;
        cov += d * d.transpose();
    }
    Some((c, cov / cloud.len() as f64))
}

/// Eigenpairs of a symmetric 3×3 matrix sorted by descending eigenvalue.
pub fn sorted_eigen(m: &Mat3) -> [(f64, Vec3); 3] {
    let eig = SymmetricEigen::new(*m);
    let mut pairs: Vec<(f64, Vec3)> = (0..3)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    [pairs[0], pairs[1], pairs[2]]
}

/// Fits the target frame: origin at the centroid, y along the principal
/// axis, z the vertical direction made orthogonal to y, and x = y × z facing
/// the camera.
pub fn extract_target_frame(
    cluster: &PointCloud,
    camera_position: &Vec3,
    label: DetectionLabel,
    params: &PerceptionParams,
) -> Result<TargetFrameEstimate, PerceptionError> {
    if cluster.len() < 3 {
        return Err(PerceptionError::DegenerateCloud(format!(
            "{} points",
            cluster.len()
        )));
    }
    let (centroid, cov) = covariance(cluster).ok_or(PerceptionError::EmptyCluster)?;
    let [(l1, axis), (l2, _), _] = sorted_eigen(&cov);
    let ratio = if l2 <= l1 * 1e-12 { f64::INFINITY } else { l1 / l2 };
    if !(ratio >= params.min_principal_ratio) {
        return Err(PerceptionError::DegenerateCloud(format!(
            "eigenvalue ratio {ratio:.3}"
        )));
    }

    let up = Vec3::z();
    let mut y = axis.normalize();
    let tilt = y.dot(&up).abs().min(1.0).acos();
    if tilt < params.min_axis_tilt_deg.to_radians() {
        return Err(PerceptionError::DegenerateCloud(format!(
            "principal axis {:.2} deg from vertical",
            tilt.to_degrees()
        )));
    }
    let z = (up - y * y.dot(&up)).normalize();
    let mut x = y.cross(&z);
    if x.dot(&(camera_position - centroid)) < 0.0 {
        y = -y;
        x = -x;
    }
    Ok(TargetFrameEstimate {
        pose: Pose::from_axes(centroid, x, y, z),
        point_count: cluster.len(),
        principal_ratio: ratio,
        label,
    })
}

/// Centroid of an anchor cluster.
pub fn extract_anchor_position(cluster: &PointCloud) -> Result<Vec3, PerceptionError> {
    cluster.centroid().ok_or(PerceptionError::EmptyCluster)
}

/// Masked world-frame cloud for one box, downsampled and clustered; returns
/// the cluster nearest the camera.
pub fn nearest_cluster(
    image: &DepthImage,
    bbox: &BoundingBox,
    camera_pose: &Pose,
    params: &PerceptionParams,
) -> Result<PointCloud, PerceptionError> {
    let masked = mask_depth(image, bbox, params.box_shrink)?;
    let cloud = depth_to_cloud(&masked, camera_pose);
    let down = voxel_downsample(&cloud, params.voxel_size);
    euclidean_cluster(
        &down,
        params.cluster_tolerance,
        params.min_cluster_size,
        &camera_pose.position,
    )
    .into_iter()
    .next()
    .ok_or(PerceptionError::NoCluster)
}

/// Full environmental-recognition pipeline for one detection.
pub fn recognize_target(
    image: &DepthImage,
    bbox: &BoundingBox,
    camera_pose: &Pose,
    params: &PerceptionParams,
) -> Result<TargetFrameEstimate, PerceptionError> {
    let cluster = nearest_cluster(image, bbox, camera_pose, params)?;
    extract_target_frame(&cluster, &camera_pose.position, bbox.label, params)
}

/// Full anchor-recognition pipeline for one detection.
pub fn recognize_anchor(
    image: &DepthImage,
    bbox: &BoundingBox,
    camera_pose: &Pose,
    params: &PerceptionParams,
) -> Result<Vec3, PerceptionError> {
    let cluster = nearest_cluster(image, bbox, camera_pose, params)?;
    extract_anchor_position(&cluster)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn intrinsics() -> Intrinsics {
        Intrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
        }
    }

    fn filled(w: usize, h: usize, d: f64) -> DepthImage {
        let mut img = DepthImage::new(w, h, intrinsics());
        img.depth.iter_mut().for_each(|x| *x = d);
        img
    }

    fn bbox(u0: f64, v0: f64, u1: f64, v1: f64) -> BoundingBox {
        BoundingBox {
            u_min: u0,
            v_min: v0,
            u_max: u1,
            v_max: v1,
            label: DetectionLabel::Bar,
        }
    }

    #[test]
    fn full_box_without_shrink_is_identity() {
        let mut img = filled(100, 100, 2.0);
        img.set(3, 4, 0.0);
        let out = mask_depth(&img, &bbox(0.0, 0.0, 100.0, 100.0), 0.0).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn half_shrink_keeps_centered_quarter() {
        let img = filled(100, 100, 2.0);
        let out = mask_depth(&img, &bbox(0.0, 0.0, 100.0, 100.0), 0.5).unwrap();
        assert_eq!(out.valid_count(), 50 * 50);
        assert!(out.get(25, 25) > 0.0 && out.get(74, 74) > 0.0);
        assert_eq!(out.get(24, 50), 0.0);
        assert_eq!(out.get(75, 50), 0.0);
    }

    #[test]
    fn collapsed_box_is_empty_mask() {
        let img = filled(10, 10, 1.0);
        let err = mask_depth(&img, &bbox(4.2, 4.2, 4.8, 4.8), 0.0).unwrap_err();
        assert_eq!(err, PerceptionError::EmptyMask);
        assert!(matches!(
            mask_depth(&img, &bbox(20.0, 20.0, 30.0, 30.0), 0.0),
            Err(PerceptionError::InvalidBox(_))
        ));
    }

    #[test]
    fn mask_count_matches_per_pixel_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        let img = filled(64, 48, 1.5);
        for _ in 0..50 {
            let u0 = rng.random_range(-5.0..60.0);
            let v0 = rng.random_range(-5.0..44.0);
            let b = bbox(
                u0,
                v0,
                u0 + rng.random_range(3.0..40.0),
                v0 + rng.random_range(3.0..30.0),
            );
            let shrink = rng.random_range(0.0..0.6);
            // oracle: clamp, shrink, then test every pixel
            let c = bbox(b.u_min.max(0.0), b.v_min.max(0.0), b.u_max.min(64.0), b.v_max.min(48.0));
            let s = c.shrunk(shrink);
            let mut expected = 0;
            for v in 0..48 {
                for u in 0..64 {
                    if s.contains_pixel(u, v) {
                        expected += 1;
                    }
                }
            }
            match mask_depth(&img, &b, shrink) {
                Ok(out) => assert_eq!(out.valid_count(), expected),
                Err(_) => assert_eq!(expected, 0),
            }
        }
    }

    #[test]
    fn principal_point_and_focal_offset() {
        let k = Intrinsics { fx: 40.0, fy: 40.0, cx: 50.0, cy: 50.0 };
        let mut img = DepthImage::new(101, 101, k);
        img.set(50, 50, 2.0);
        img.set(90, 50, 1.0);
        let cloud = depth_to_cloud(&img, &Pose::identity());
        assert_eq!(cloud.len(), 2);
        assert_relative_eq!(cloud.points[0], Vec3::new(0.0, 0.0, 2.0));
        assert_relative_eq!(cloud.points[1], Vec3::new(1.0, 0.0, 1.0));
    }

    #[test]
    fn plane_reprojects_exactly() {
        // forward-render a plane z = 3 in camera frame, then invert
        let pose = Pose::new(
            Vec3::new(0.5, -1.0, 2.0),
            crate::geometry::Quat::from_euler_angles(0.3, -0.2, 1.1),
        );
        let img = filled(40, 30, 3.0);
        let cloud = depth_to_cloud(&img, &pose);
        let normal = pose.z_axis();
        let origin = pose.position + normal * 3.0;
        let worst = cloud
            .points
            .iter()
            .map(|p| (p - origin).dot(&normal).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "max plane error {worst}");
    }

    #[test]
    fn one_voxel_collapses_to_centroid() {
        let cloud = PointCloud::new(
            CloudFrame::World,
            vec![Vec3::new(0.001, 0.002, 0.003), Vec3::new(0.011, 0.004, 0.001)],
        );
        let out = voxel_downsample(&cloud, 0.05);
        assert_eq!(out.len(), 1);
        assert_relative_eq!(out.points[0], Vec3::new(0.006, 0.003, 0.002), epsilon = 1e-15);
        let far = PointCloud::new(CloudFrame::World, vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)]);
        assert_eq!(voxel_downsample(&far, 0.05).len(), 2);
    }

    #[test]
    fn two_blobs_and_a_chain() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.002;
            pts.push(Vec3::new(t, 0.0, 0.0));
            pts.push(Vec3::new(1.0 + t, 0.0, 0.0));
        }
        let cloud = PointCloud::new(CloudFrame::World, pts);
        let clusters = euclidean_cluster(&cloud, 0.1, 1, &Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(clusters.len(), 2);
        assert!(clusters[0].centroid().unwrap().x > 0.5, "nearest to reference first");

        let chain: Vec<Vec3> = (0..30).map(|i| Vec3::new(i as f64 * 0.09, 0.0, 0.0)).collect();
        let chain = PointCloud::new(CloudFrame::World, chain);
        assert_eq!(euclidean_cluster(&chain, 0.1, 1, &Vec3::zeros()).len(), 1);
        assert!(euclidean_cluster(&chain, 0.1, 31, &Vec3::zeros()).is_empty());
    }

    #[test]
    fn clustering_is_permutation_invariant() {
        let mut rng = StdRng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..300)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let as_sets = |clusters: Vec<PointCloud>| {
            let mut sets: Vec<Vec<[u64; 3]>> = clusters
                .into_iter()
                .map(|c| {
                    let mut s: Vec<[u64; 3]> = c
                        .points
                        .iter()
                        .map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
                        .collect();
                    s.sort_unstable();
                    s
                })
                .collect();
            sets.sort();
            sets
        };
        let a = euclidean_cluster(&PointCloud::new(CloudFrame::World, pts.clone()), 0.08, 2, &Vec3::zeros());
        let mut shuffled = pts;
        shuffled.shuffle(&mut rng);
        let b = euclidean_cluster(&PointCloud::new(CloudFrame::World, shuffled), 0.08, 2, &Vec3::zeros());
        assert_eq!(as_sets(a), as_sets(b));
    }

    #[test]
    fn eigen_matches_power_iteration() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..50 {
            let a = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            // SPD with a clear gap at the top
            let m = a * a.transpose() + Mat3::from_diagonal(&Vec3::new(3.0, 0.0, 0.0));
            let mut v = Vec3::new(1.0, 0.3, -0.2);
            for _ in 0..2000 {
                v = (m * v).normalize();
            }
            let lambda = v.dot(&(m * v));
            let [(l0, e0), (l1, _), (l2, _)] = sorted_eigen(&m);
            assert!(l0 >= l1 && l1 >= l2);
            assert_relative_eq!(l0, lambda, epsilon = 1e-6);
            assert!((e0.dot(&v).abs() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn segment_along_y_gives_canonical_frame() {
        let pts = (0..=20)
            .map(|i| Vec3::new(2.0, -1.0 + 0.1 * i as f64, 1.0))
            .collect();
        let cloud = PointCloud::new(CloudFrame::World, pts);
        let est = extract_target_frame(&cloud, &Vec3::zeros(), DetectionLabel::Bar, &PerceptionParams::default())
            .unwrap();
        assert_relative_eq!(est.pose.position, Vec3::new(2.0, 0.0, 1.0), epsilon = 1e-12);
        assert_relative_eq!(est.pose.y_axis().y.abs(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(est.pose.z_axis(), Vec3::z(), epsilon = 1e-9);
        // camera at the origin sits on the -x side of the segment
        assert!(est.pose.x_axis().x < -0.99);
    }

    #[test]
    fn frame_is_right_handed_orthonormal() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5))
                .normalize();
            let pts = (0..100)
                .map(|_| {
                    dir * rng.random_range(-0.5..0.5)
                        + Vec3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01))
                })
                .collect();
            let cam = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 1.0);
            let Ok(est) = extract_target_frame(&PointCloud::new(CloudFrame::World, pts), &cam, DetectionLabel::Branch, &PerceptionParams::default())
            else {
                continue;
            };
            let r = est.pose.rotation_matrix();
            assert!((r.transpose() * r - Mat3::identity()).norm() < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
            assert!(est.pose.x_axis().dot(&(cam - est.pose.position)) >= 0.0);
        }
    }

    #[test]
    fn degenerate_clouds_are_rejected() {
        let params = PerceptionParams::default();
        let blob: Vec<Vec3> = (0..27)
            .map(|i| Vec3::new((i % 3) as f64, ((i / 3) % 3) as f64, (i / 9) as f64) * 0.1)
            .collect();
        assert!(matches!(
            extract_target_frame(&PointCloud::new(CloudFrame::World, blob), &Vec3::zeros(), DetectionLabel::Bar, &params),
            Err(PerceptionError::DegenerateCloud(_))
        ));
        let pole: Vec<Vec3> = (0..20).map(|i| Vec3::new(0.0, 0.0, i as f64 * 0.1)).collect();
        assert!(matches!(
            extract_target_frame(&PointCloud::new(CloudFrame::World, pole), &Vec3::x(), DetectionLabel::Bar, &params),
            Err(PerceptionError::DegenerateCloud(_))
        ));
    }

    #[test]
    fn anchor_centroid() {
        let one = PointCloud::new(CloudFrame::World, vec![Vec3::new(1.0, 2.0, 3.0)]);
        assert_eq!(extract_anchor_position(&one).unwrap(), Vec3::new(1.0, 2.0, 3.0));
        let c = Vec3::new(1.0, 2.0, 3.0);
        let sym: Vec<Vec3> = [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()]
            .iter()
            .map(|d| c + d * 0.1)
            .collect();
        assert_relative_eq!(
            extract_anchor_position(&PointCloud::new(CloudFrame::World, sym)).unwrap(),
            c,
            epsilon = 1e-12
        );
        assert_eq!(
            extract_anchor_position(&PointCloud::new(CloudFrame::World, vec![])),
            Err(PerceptionError::EmptyCluster)
        );
    }

    #[test]
    fn binary_layout_round_trips() {
        let mut img = DepthImage::new(3, 2, intrinsics());
        img.set(1, 1, 2.5);
        let mut buf = Vec::new();
        img.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (2 + 4 + 6));
        assert_eq!(&buf[0..8], &3u64.to_le_bytes());
        assert_eq!(&buf[16..24], &100.0f64.to_le_bytes());
        assert_eq!(DepthImage::read_binary(&buf[..]).unwrap(), img);
        assert!(DepthImage::read_binary(&buf[..20]).is_err());
    }
}
