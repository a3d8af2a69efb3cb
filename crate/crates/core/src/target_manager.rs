//! Candidate attachment frames, each tracked by a static-state Kalman filter
//! over position and orientation.
//!
//! The position and rotation blocks are filtered independently (the
//! covariance stays block diagonal). Orientation residuals are rotation
//! vectors from [`rotation_vector_between`] and the correction is applied
//! with [`apply_rotation_vector`].

use nalgebra::{Matrix3, Matrix6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{apply_rotation_vector, rotation_vector_between, Pose, Vec3};
use crate::perception::{DetectionLabel, TargetFrameEstimate};

pub type Mat6 = Matrix6<f64>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TargetError {
    #[error("unknown target id {0}")]
    UnknownTarget(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetManagerConfig {
    /// Association radius, meters.
    pub threshold: f64,
    pub prior_position_sigma: f64,
    pub prior_rotation_sigma: f64,
    pub obs_position_sigma: f64,
    pub obs_rotation_sigma: f64,
    /// Process noise rates added per second (variance / s).
    pub process_position_rate: f64,
    pub process_rotation_rate: f64,
}

impl Default for TargetManagerConfig {
    fn default() -> Self {
        Self {
            threshold: 0.3,
            prior_position_sigma: 0.05,
            prior_rotation_sigma: 0.1,
            obs_position_sigma: 0.02,
            obs_rotation_sigma: 0.05,
            process_position_rate: 1e-6,
            process_rotation_rate: 1e-6,
        }
    }
}

impl TargetManagerConfig {
    pub fn prior_covariance(&self) -> Mat6 {
        block_diag(
            self.prior_position_sigma.powi(2),
            self.prior_rotation_sigma.powi(2),
        )
    }

    pub fn observation_covariance(&self) -> Mat6 {
        block_diag(self.obs_position_sigma.powi(2), self.obs_rotation_sigma.powi(2))
    }

    pub fn process_rate(&self) -> Mat6 {
        block_diag(self.process_position_rate, self.process_rotation_rate)
    }
}

fn block_diag(pos: f64, rot: f64) -> Mat6 {
    Mat6::from_diagonal(&nalgebra::Vector6::new(pos, pos, pos, rot, rot, rot))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTrack {
    pub id: u32,
    pub pose: Pose,
    /// Rows/cols 0..3 position (m²), 3..6 rotation vector (rad²).
    pub covariance: Mat6,
    pub hit_count: u32,
    pub label: DetectionLabel,
}

impl TargetTrack {
    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub tracks: Vec<TargetTrack>,
    pub next_id: u32,
    pub config: TargetManagerConfig,
}

impl Default for TargetSet {
    fn default() -> Self {
        Self::new(TargetManagerConfig::default())
    }
}

/// Which branch an observation took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Association {
    Updated(u32),
    Registered(u32),
}

impl TargetSet {
    pub fn new(config: TargetManagerConfig) -> Self {
        Self {
            tracks: Vec::new(),
            next_id: 0,
            config,
        }
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Targets are static: only the covariance grows.
    pub fn predict(&mut self, dt: f64) {
        debug_assert!(dt >= 0.0);
        if dt == 0.0 {
            return;
        }
        let q = self.config.process_rate() * dt;
        for t in &mut self.tracks {
            t.covariance += q;
        }
    }

    /// Updates the nearest track within `threshold` or registers a new one.
    pub fn observe(&mut self, obs: &TargetFrameEstimate, threshold: f64) -> Association {
        let nearest = self
            .tracks
            .iter_mut()
            .map(|t| ((t.pose.position - obs.pose.position).norm(), t))
            .filter(|(d, _)| *d <= threshold)
            .min_by(|a, b| a.0.total_cmp(&b.0));

        match nearest {
            Some((_, track)) => {
                kalman_update(track, &obs.pose, &self.config.observation_covariance());
                track.hit_count += 1;
                Association::Updated(track.id)
            }
            None => {
                let id = self.next_id;
                self.next_id += 1;
                self.tracks.push(TargetTrack {
                    id,
                    pose: obs.pose,
                    covariance: self.config.prior_covariance(),
                    hit_count: 1,
                    label: obs.label,
                });
                Association::Registered(id)
            }
        }
    }

    pub fn get(&self, id: u32) -> Result<&TargetTrack, TargetError> {
        self.tracks
            .iter()
            .find(|t| t.id == id)
            .ok_or(TargetError::UnknownTarget(id))
    }

    pub fn get_target(&self, id: u32) -> Result<Pose, TargetError> {
        self.get(id).map(|t| t.pose)
    }

    /// Track whose position is nearest `point`.
    pub fn nearest_to(&self, point: &Vec3) -> Option<&TargetTrack> {
        self.tracks.iter().min_by(|a, b| {
            (a.pose.position - point)
                .norm()
                .total_cmp(&(b.pose.position - point).norm())
        })
    }
}

/// Covariance-only prediction, returning a new set.
pub fn predict_targets(set: &TargetSet, dt: f64) -> TargetSet {
    let mut out = set.clone();
    out.predict(dt);
    out
}

pub fn observe_target(set: &TargetSet, obs: &TargetFrameEstimate, threshold: f64) -> TargetSet {
    let mut out = set.clone();
    out.observe(obs, threshold);
    out
}

pub fn get_target(set: &TargetSet, id: u32) -> Result<Pose, TargetError> {
    set.get_target(id)
}

fn block_update(p: &Matrix3<f64>, r: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    // Identity measurement model: S = P + R, K = P S⁻¹.
    let s = p + r;
    let s_inv = s
        .try_inverse()
        .expect("innovation covariance of a PSD prior plus PD noise is invertible");
    let k = p * s_inv;
    let mut post = (Matrix3::identity() - k) * p;
    post = 0.5 * (post + post.transpose());
    (k, post)
}

fn kalman_update(track: &mut TargetTrack, obs: &Pose, r: &Mat6) {
    let p_pos: Matrix3<f64> = track.covariance.fixed_view::<3, 3>(0, 0).into_owned();
    let p_rot: Matrix3<f64> = track.covariance.fixed_view::<3, 3>(3, 3).into_owned();
    let r_pos: Matrix3<f64> = r.fixed_view::<3, 3>(0, 0).into_owned();
    let r_rot: Matrix3<f64> = r.fixed_view::<3, 3>(3, 3).into_owned();

    let (k_pos, post_pos) = block_update(&p_pos, &r_pos);
    let (k_rot, post_rot) = block_update(&p_rot, &r_rot);

    let e_pos = obs.position - track.pose.position;
    let e_rot = rotation_vector_between(&obs.orientation, &track.pose.orientation);

    track.pose.position += k_pos * e_pos;
    track.pose.orientation = apply_rotation_vector(&track.pose.orientation, &(k_rot * e_rot));

    let mut cov = Mat6::zeros();
    cov.fixed_view_mut::<3, 3>(0, 0).copy_from(&post_pos);
    cov.fixed_view_mut::<3, 3>(3, 3).copy_from(&post_rot);
    track.covariance = cov;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{quaternion_distance, Quat};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn obs_at(p: Vec3, q: Quat) -> TargetFrameEstimate {
        TargetFrameEstimate {
            pose: Pose::new(p, q),
            point_count: 100,
            principal_ratio: 10.0,
            label: DetectionLabel::Bar,
        }
    }

    #[test]
    fn registration_branch() {
        let mut set = TargetSet::default();
        let o = obs_at(Vec3::new(1.0, 2.0, 3.0), Quat::from_euler_angles(0.0, 0.0, 0.4));
        assert_eq!(set.observe(&o, 0.3), Association::Registered(0));
        assert_eq!(set.len(), 1);
        assert_eq!(set.get_target(0).unwrap(), o.pose);
        assert_eq!(set.get_target(5), Err(TargetError::UnknownTarget(5)));
    }

    #[test]
    fn zero_dt_predict_is_noop_and_growth_is_additive() {
        let mut set = TargetSet::new(TargetManagerConfig {
            process_position_rate: 1e-4,
            process_rotation_rate: 1e-4,
            ..Default::default()
        });
        set.observe(&obs_at(Vec3::zeros(), Quat::identity()), 0.3);
        let before = set.clone();
        assert_eq!(predict_targets(&set, 0.0), before);
        set.predict(1.0);
        let grown = set.tracks[0].covariance - before.tracks[0].covariance;
        assert_relative_eq!(grown, Mat6::identity() * 1e-4, epsilon = 1e-18);
        assert_eq!(set.tracks[0].pose, before.tracks[0].pose);
    }

    #[test]
    fn identical_observation_leaves_pose() {
        let mut set = TargetSet::default();
        let o = obs_at(Vec3::new(0.1, -0.2, 1.0), Quat::from_euler_angles(0.1, 0.0, -0.3));
        set.observe(&o, 0.3);
        set.observe(&o, 0.3);
        set.observe(&o, 0.3);
        let t = set.get(0).unwrap();
        assert_relative_eq!(t.pose.position, o.pose.position, epsilon = 1e-9);
        assert!(quaternion_distance(&t.pose.orientation, &o.pose.orientation) < 1e-9);
        assert_eq!(t.hit_count, 3);
    }

    #[test]
    fn diffuse_prior_jumps_to_observation() {
        let mut set = TargetSet::default();
        set.observe(&obs_at(Vec3::zeros(), Quat::identity()), 0.3);
        set.tracks[0].covariance = Mat6::identity() * 1e6;
        let target = Vec3::new(0.1, 0.0, 0.0);
        set.observe(&obs_at(target, Quat::identity()), 0.3);
        // scalar limit: gain = 1e6 / (1e6 + 0.02²)
        let oracle = 0.1 * 1e6 / (1e6 + 0.02f64.powi(2));
        assert_relative_eq!(set.tracks[0].pose.position.x, oracle, epsilon = 1e-12);
        assert!((set.tracks[0].pose.position - target).norm() < 1e-3);
    }

    #[test]
    fn ties_go_to_nearest_track() {
        let mut set = TargetSet::default();
        set.observe(&obs_at(Vec3::zeros(), Quat::identity()), 0.3);
        set.observe(&obs_at(Vec3::new(0.5, 0.0, 0.0), Quat::identity()), 0.3);
        assert_eq!(
            set.observe(&obs_at(Vec3::new(0.3, 0.0, 0.0), Quat::identity()), 0.3),
            Association::Updated(1)
        );
    }

    fn arb_rot(max: f64) -> impl Strategy<Value = Vec3> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..max)
            .prop_filter("axis", |(x, y, z, _)| x * x + y * y + z * z > 1e-2)
            .prop_map(|(x, y, z, a)| Vec3::new(x, y, z).normalize() * a)
    }

    proptest! {
        #[test]
        fn update_never_grows_trace_or_count(
            dx in -0.25..0.25f64, dy in -0.1..0.1f64, rot in arb_rot(0.2),
        ) {
            let mut set = TargetSet::default();
            set.observe(&obs_at(Vec3::zeros(), Quat::identity()), 0.3);
            let before = set.tracks[0].trace();
            let q = Quat::from_scaled_axis(rot);
            set.observe(&obs_at(Vec3::new(dx, dy, 0.0), q), 0.3);
            prop_assert_eq!(set.len(), 1);
            prop_assert!(set.tracks[0].trace() <= before);
            let eig = set.tracks[0].covariance.symmetric_eigenvalues();
            prop_assert!(eig.min() > -1e-10);
        }

        #[test]
        fn posterior_orientation_lies_between(rot in arb_rot(0.2), base in arb_rot(3.0)) {
            let prior = Quat::from_scaled_axis(base);
            let observed = Quat::from_scaled_axis(rot) * prior;
            let mut set = TargetSet::default();
            set.observe(&obs_at(Vec3::zeros(), prior), 0.3);
            set.observe(&obs_at(Vec3::zeros(), observed), 0.3);
            let post = set.tracks[0].pose.orientation;
            let mutual = prior.angle_to(&observed);
            let to_prior = post.angle_to(&prior);
            let to_obs = post.angle_to(&observed);
            prop_assert!(to_prior <= mutual + 1e-6);
            prop_assert!(to_obs <= mutual + 1e-6);
            prop_assert!((to_prior + to_obs - mutual).abs() < 1e-6);
        }
    }
}
