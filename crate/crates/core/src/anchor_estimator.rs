//! Per-anchor extended Kalman filter fusing world-frame camera fixes with
//! the anchor's own visual odometry, which lives in a drifting frame offset
//! from world by a translation `u` and a yaw `φ`.
//!
//! State layout (11): position (3, world), velocity (3, world),
//! `θ` = yaw of the odom frame seen from the anchor (1), `u` (3), `φ` (1).
//!
//! Observation layout (10): camera fix (3), odom position (3), odom
//! velocity (3), odom yaw (1). With `T(φ)` the yaw rotation,
//!
//! ```text
//! h(x) = [ p ; T(φ)·p + u ; T(φ)·v ; −θ ]
//! ```
//!
//! Odometry reports the anchor heading as `yaw_world + φ`, so the anchor's
//! world yaw is `−θ − φ`.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    wrap_angle, yaw_rotation_matrix, yaw_rotation_matrix_derivative, Pose, Vec3, YawAngle,
};

pub const STATE_DIM: usize = 11;
pub const OBS_DIM: usize = 10;
/// Number of independent process-noise inputs in the default model.
pub const NOISE_DIM: usize = 8;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type ObsVector = SVector<f64, OBS_DIM>;
pub type ObsJacobian = SMatrix<f64, OBS_DIM, STATE_DIM>;

pub mod idx {
    pub const POS: usize = 0;
    pub const VEL: usize = 3;
    pub const THETA: usize = 6;
    pub const U: usize = 7;
    pub const PHI: usize = 10;

    pub const OBS_CAMERA: usize = 0;
    pub const OBS_ODOM_POS: usize = 3;
    pub const OBS_ODOM_VEL: usize = 6;
    pub const OBS_ODOM_YAW: usize = 9;
}

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("innovation covariance is singular (condition number {0:e})")]
    SingularInnovation(f64),
    #[error("observation bundle is empty")]
    EmptyObservation,
}

/// Standard deviations behind the default `G`, `Q` and `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Random-walk acceleration, m/s².
    pub accel_sigma: f64,
    /// rad/√s
    pub theta_rate_sigma: f64,
    /// m/√s
    pub u_rate_sigma: f64,
    /// rad/√s
    pub phi_rate_sigma: f64,
    pub camera_sigma: f64,
    pub odom_position_sigma: f64,
    pub odom_velocity_sigma: f64,
    pub odom_yaw_sigma: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            accel_sigma: 0.5,
            theta_rate_sigma: 1e-3,
            u_rate_sigma: 1e-3,
            phi_rate_sigma: 1e-3,
            camera_sigma: 0.05,
            odom_position_sigma: 0.02,
            odom_velocity_sigma: 0.05,
            odom_yaw_sigma: 0.02,
        }
    }
}

/// Discrete-time noise model: `P ← F P Fᵀ + G Q Gᵀ` and observation
/// covariance `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub g: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: SMatrix<f64, OBS_DIM, OBS_DIM>,
}

impl NoiseConfig {
    /// Discretizes `params` for a filter step of `dt` seconds.
    pub fn from_params(params: &NoiseParams, dt: f64) -> Self {
        let mut g = DMatrix::zeros(STATE_DIM, NOISE_DIM);
        for k in 0..3 {
            g[(idx::VEL + k, k)] = 1.0;
            g[(idx::U + k, 4 + k)] = 1.0;
        }
        g[(idx::THETA, 3)] = 1.0;
        g[(idx::PHI, 7)] = 1.0;

        let a = params.accel_sigma.powi(2) * dt;
        let u = params.u_rate_sigma.powi(2) * dt;
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![
            a,
            a,
            a,
            params.theta_rate_sigma.powi(2) * dt,
            u,
            u,
            u,
            params.phi_rate_sigma.powi(2) * dt,
        ]));

        let mut r_diag = [0.0; OBS_DIM];
        for k in 0..3 {
            r_diag[idx::OBS_CAMERA + k] = params.camera_sigma.powi(2);
            r_diag[idx::OBS_ODOM_POS + k] = params.odom_position_sigma.powi(2);
            r_diag[idx::OBS_ODOM_VEL + k] = params.odom_velocity_sigma.powi(2);
        }
        r_diag[idx::OBS_ODOM_YAW] = params.odom_yaw_sigma.powi(2);
        let r = SMatrix::from_diagonal(&SVector::from_row_slice(&r_diag));
        Self { g, q, r }
    }

    pub fn process_covariance(&self) -> StateMatrix {
        let gqg = &self.g * &self.q * self.g.transpose();
        StateMatrix::from_iterator(gqg.iter().copied())
    }
}

/// Initial standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorParams {
    pub position_sigma: f64,
    pub velocity_sigma: f64,
    pub theta_sigma: f64,
    pub u_sigma: f64,
    pub phi_sigma: f64,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            position_sigma: 0.1,
            velocity_sigma: 0.1,
            theta_sigma: 0.05,
            u_sigma: 0.5,
            phi_sigma: 0.1,
        }
    }
}

impl PriorParams {
    pub fn covariance(&self) -> StateMatrix {
        let mut d = StateVector::zeros();
        for k in 0..3 {
            d[idx::POS + k] = self.position_sigma.powi(2);
            d[idx::VEL + k] = self.velocity_sigma.powi(2);
            d[idx::U + k] = self.u_sigma.powi(2);
        }
        d[idx::THETA] = self.theta_sigma.powi(2);
        d[idx::PHI] = self.phi_sigma.powi(2);
        StateMatrix::from_diagonal(&d)
    }
}

/// One flying anchor's estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorBelief {
    pub anchor_id: u32,
    pub x: StateVector,
    pub p: StateMatrix,
    pub init_frame: Pose,
    pub last_camera_fix_age: f64,
    pub camera_fixes_accepted: u32,
}

impl AnchorBelief {
    /// Belief at rest on the take-off pad: position at the init frame
    /// origin, everything else zero.
    pub fn new(anchor_id: u32, init_frame: Pose, prior: &PriorParams) -> Self {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(idx::POS).copy_from(&init_frame.position);
        Self {
            anchor_id,
            x,
            p: prior.covariance(),
            init_frame,
            last_camera_fix_age: f64::INFINITY,
            camera_fixes_accepted: 0,
        }
    }

    /// Aligns `u` and `θ` with a first odometry reading so that the odometry
    /// rows start with zero residual. Covariances are left untouched.
    pub fn seed_from_odometry(&mut self, odom_position: &Vec3, odom_yaw: YawAngle) {
        let t = yaw_rotation_matrix(self.phi());
        let u = odom_position - t * self.position();
        self.x.fixed_rows_mut::<3>(idx::U).copy_from(&u);
        self.x[idx::THETA] = -odom_yaw.radians();
    }

    pub fn position(&self) -> Vec3 {
        self.x.fixed_rows::<3>(idx::POS).into_owned()
    }

    pub fn velocity(&self) -> Vec3 {
        self.x.fixed_rows::<3>(idx::VEL).into_owned()
    }

    pub fn theta(&self) -> YawAngle {
        YawAngle::new(self.x[idx::THETA])
    }

    pub fn odom_offset(&self) -> Vec3 {
        self.x.fixed_rows::<3>(idx::U).into_owned()
    }

    pub fn phi(&self) -> YawAngle {
        YawAngle::new(self.x[idx::PHI])
    }

    /// Anchor heading in the world frame.
    pub fn world_yaw(&self) -> YawAngle {
        -self.theta() - self.phi()
    }

    pub fn position_covariance(&self) -> nalgebra::Matrix3<f64> {
        self.p.fixed_view::<3, 3>(idx::POS, idx::POS).into_owned()
    }

    pub fn covariance_diagonal(&self) -> StateVector {
        self.p.diagonal()
    }

    /// Normalized estimation error squared against a true state.
    pub fn nees(&self, truth: &StateVector) -> f64 {
        let mut e = truth - self.x;
        e[idx::THETA] = wrap_angle(e[idx::THETA]);
        e[idx::PHI] = wrap_angle(e[idx::PHI]);
        let p_inv = self
            .p
            .cholesky()
            .expect("covariance must stay positive definite")
            .inverse();
        (e.transpose() * p_inv * e)[(0, 0)]
    }
}

/// Which of the ten observation rows an update uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationBundle {
    pub camera_fix: Option<Vec3>,
    pub odom_position: Option<Vec3>,
    pub odom_velocity: Option<Vec3>,
    pub odom_yaw: Option<YawAngle>,
}

impl ObservationBundle {
    pub fn camera(fix: Vec3) -> Self {
        Self {
            camera_fix: Some(fix),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.camera_fix.is_none()
            && self.odom_position.is_none()
            && self.odom_velocity.is_none()
            && self.odom_yaw.is_none()
    }

    /// Odometry fields only.
    pub fn odometry(&self) -> Self {
        Self {
            camera_fix: None,
            ..*self
        }
    }

    /// Present rows and their measured values, in observation order.
    fn rows(&self) -> (Vec<usize>, Vec<f64>) {
        let mut rows = Vec::with_capacity(OBS_DIM);
        let mut values = Vec::with_capacity(OBS_DIM);
        let mut push3 = |start: usize, v: &Option<Vec3>| {
            if let Some(v) = v {
                for k in 0..3 {
                    rows.push(start + k);
                    values.push(v[k]);
                }
            }
        };
        push3(idx::OBS_CAMERA, &self.camera_fix);
        push3(idx::OBS_ODOM_POS, &self.odom_position);
        push3(idx::OBS_ODOM_VEL, &self.odom_velocity);
        if let Some(yaw) = self.odom_yaw {
            rows.push(idx::OBS_ODOM_YAW);
            values.push(yaw.radians());
        }
        (rows, values)
    }
}

/// Constant-velocity transition.
pub fn transition_matrix(dt: f64) -> StateMatrix {
    let mut f = StateMatrix::identity();
    for k in 0..3 {
        f[(idx::POS + k, idx::VEL + k)] = dt;
    }
    f
}

pub fn ekf_predict(belief: &AnchorBelief, dt: f64, noise: &NoiseConfig) -> AnchorBelief {
    debug_assert!(dt > 0.0);
    let f = transition_matrix(dt);
    let mut out = belief.clone();
    out.x = f * belief.x;
    out.p = f * belief.p * f.transpose() + noise.process_covariance();
    out.p = 0.5 * (out.p + out.p.transpose());
    out.last_camera_fix_age += dt;
    out
}

pub fn ekf_measurement(x: &StateVector) -> ObsVector {
    let p = x.fixed_rows::<3>(idx::POS);
    let v = x.fixed_rows::<3>(idx::VEL);
    let u = x.fixed_rows::<3>(idx::U);
    let t = yaw_rotation_matrix(YawAngle::new(x[idx::PHI]));
    let odom_p = t * p + u;
    let odom_v = t * v;
    let mut z = ObsVector::zeros();
    z.fixed_rows_mut::<3>(idx::OBS_CAMERA).copy_from(&p);
    z.fixed_rows_mut::<3>(idx::OBS_ODOM_POS).copy_from(&odom_p);
    z.fixed_rows_mut::<3>(idx::OBS_ODOM_VEL).copy_from(&odom_v);
    z[idx::OBS_ODOM_YAW] = -x[idx::THETA];
    z
}

pub fn ekf_jacobian(x: &StateVector) -> ObsJacobian {
    let phi = YawAngle::new(x[idx::PHI]);
    let t = yaw_rotation_matrix(phi);
    let dt = yaw_rotation_matrix_derivative(phi);
    let p: Vec3 = x.fixed_rows::<3>(idx::POS).into_owned();
    let v: Vec3 = x.fixed_rows::<3>(idx::VEL).into_owned();

    let mut h = ObsJacobian::zeros();
    h.fixed_view_mut::<3, 3>(idx::OBS_CAMERA, idx::POS)
        .copy_from(&nalgebra::Matrix3::identity());
    h.fixed_view_mut::<3, 3>(idx::OBS_ODOM_POS, idx::POS).copy_from(&t);
    h.fixed_view_mut::<3, 3>(idx::OBS_ODOM_POS, idx::U)
        .copy_from(&nalgebra::Matrix3::identity());
    h.fixed_view_mut::<3, 1>(idx::OBS_ODOM_POS, idx::PHI).copy_from(&(dt * p));
    h.fixed_view_mut::<3, 3>(idx::OBS_ODOM_VEL, idx::VEL).copy_from(&t);
    h.fixed_view_mut::<3, 1>(idx::OBS_ODOM_VEL, idx::PHI).copy_from(&(dt * v));
    h[(idx::OBS_ODOM_YAW, idx::THETA)] = -1.0;
    h
}

/// EKF correction using only the rows present in `z`.
pub fn ekf_update(
    belief: &AnchorBelief,
    z: &ObservationBundle,
    noise: &NoiseConfig,
) -> Result<AnchorBelief, EstimatorError> {
    let (rows, values) = z.rows();
    if rows.is_empty() {
        return Err(EstimatorError::EmptyObservation);
    }
    let m = rows.len();
    let h_full = ekf_jacobian(&belief.x);
    let z_pred = ekf_measurement(&belief.x);

    let h = DMatrix::from_fn(m, STATE_DIM, |i, j| h_full[(rows[i], j)]);
    let r = DMatrix::from_fn(m, m, |i, j| noise.r[(rows[i], rows[j])]);
    let mut e = DVector::from_fn(m, |i, _| values[i] - z_pred[rows[i]]);
    for (i, &row) in rows.iter().enumerate() {
        if row == idx::OBS_ODOM_YAW {
            e[i] = wrap_angle(e[i]);
        }
    }

    let p = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, belief.p.as_slice());
    let ph_t = &p * h.transpose();
    let mut s = &r + &h * &ph_t;
    s = 0.5 * (&s + s.transpose());

    let eig = s.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= 1e12) {
        return Err(EstimatorError::SingularInnovation(cond));
    }
    let chol = s
        .cholesky()
        .ok_or(EstimatorError::SingularInnovation(cond))?;
    // K = P Hᵀ S⁻¹  ⇔  S Kᵀ = H P
    let k = chol.solve(&ph_t.transpose()).transpose();

    let dx = &k * e;
    let kh = &k * &h;
    let i_kh = DMatrix::<f64>::identity(STATE_DIM, STATE_DIM) - kh;
    let p_post = &i_kh * &p;

    let mut out = belief.clone();
    for i in 0..STATE_DIM {
        out.x[i] += dx[i];
    }
    out.x[idx::THETA] = wrap_angle(out.x[idx::THETA]);
    out.x[idx::PHI] = wrap_angle(out.x[idx::PHI]);
    let p_post = StateMatrix::from_column_slice(p_post.as_slice());
    out.p = 0.5 * (p_post + p_post.transpose());
    if z.camera_fix.is_some() {
        out.last_camera_fix_age = 0.0;
        out.camera_fixes_accepted += 1;
    }
    Ok(out)
}

/// Accepts a camera fix for this anchor. Before the first accepted fix the
/// gate is a vertical cylinder around the take-off pad; afterwards it is a
/// sphere around the current position estimate.
pub fn gate_camera_fix(belief: &AnchorBelief, fix: &Vec3, threshold: f64, is_first: bool) -> bool {
    if is_first {
        let d = fix - belief.init_frame.position;
        let axis = belief.init_frame.z_axis();
        let lateral = d - axis * d.dot(&axis);
        lateral.norm() <= threshold
    } else {
        (fix - belief.position()).norm() <= threshold
    }
}

/// Distance used to rank competing fixes for the same gate.
pub fn gate_distance(belief: &AnchorBelief, fix: &Vec3, is_first: bool) -> f64 {
    if is_first {
        let d = fix - belief.init_frame.position;
        let axis = belief.init_frame.z_axis();
        (d - axis * d.dot(&axis)).norm()
    } else {
        (fix - belief.position()).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_2;

    fn belief() -> AnchorBelief {
        AnchorBelief::new(0, Pose::identity(), &PriorParams::default())
    }

    fn random_state(rng: &mut StdRng) -> StateVector {
        StateVector::from_fn(|i, _| match i {
            idx::THETA | idx::PHI => rng.random_range(-3.0..3.0),
            _ => rng.random_range(-5.0..5.0),
        })
    }

    #[test]
    fn predict_moves_only_position() {
        let noise = NoiseConfig::from_params(&NoiseParams::default(), 0.05);
        let mut b = belief();
        b.x = StateVector::from_fn(|i, _| i as f64 * 0.1);
        b.x.fixed_rows_mut::<3>(idx::VEL).copy_from(&Vec3::zeros());
        let out = ekf_predict(&b, 0.05, &noise);
        assert_eq!(out.x, b.x);

        b.x.fixed_rows_mut::<3>(idx::VEL).copy_from(&Vec3::new(1.0, 0.0, 0.0));
        let out = ekf_predict(&b, 0.05, &noise);
        assert_eq!(out.x[0], b.x[0] + 0.05);
        assert_eq!(out.x.rows(1, 10), b.x.rows(1, 10));
    }

    #[test]
    fn predict_covariance_matches_dense_oracle() {
        let noise = NoiseConfig {
            g: DMatrix::identity(STATE_DIM, STATE_DIM),
            q: DMatrix::identity(STATE_DIM, STATE_DIM) * 1e-4,
            r: SMatrix::identity(),
        };
        let mut b = belief();
        b.p = StateMatrix::identity();
        let out = ekf_predict(&b, 0.1, &noise);
        // dense oracle: build F entrywise and multiply by hand
        let mut f = [[0.0f64; STATE_DIM]; STATE_DIM];
        for (i, row) in f.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for k in 0..3 {
            f[k][3 + k] = 0.1;
        }
        for i in 0..STATE_DIM {
            for j in 0..STATE_DIM {
                let mut acc = 0.0;
                for (k, fk) in f[j].iter().enumerate() {
                    acc += f[i][k] * fk;
                }
                let expected = acc + if i == j { 1e-4 } else { 0.0 };
                assert_relative_eq!(out.p[(i, j)], expected, epsilon = 1e-15);
            }
        }
        assert_relative_eq!(out.p[(0, 0)], 1.0101, epsilon = 1e-12);
    }

    #[test]
    fn measurement_examples() {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(idx::POS).copy_from(&Vec3::new(1.0, 2.0, 3.0));
        x.fixed_rows_mut::<3>(idx::VEL).copy_from(&Vec3::new(0.1, 0.2, 0.3));
        let z = ekf_measurement(&x);
        assert_eq!(z.fixed_rows::<3>(0), x.fixed_rows::<3>(0));
        assert_eq!(z.fixed_rows::<3>(3), x.fixed_rows::<3>(0));
        assert_eq!(z.fixed_rows::<3>(6), x.fixed_rows::<3>(3));
        assert_eq!(z[9], 0.0);

        let mut x = StateVector::zeros();
        x[0] = 1.0;
        x[idx::PHI] = FRAC_PI_2;
        let z = ekf_measurement(&x);
        let oracle = yaw_rotation_matrix(YawAngle::new(FRAC_PI_2)) * Vec3::x();
        assert_relative_eq!(z.fixed_rows::<3>(3).into_owned(), oracle, epsilon = 1e-15);
        assert_relative_eq!(z.fixed_rows::<3>(3).into_owned(), Vec3::y(), epsilon = 1e-12);

        let mut x = StateVector::zeros();
        x[idx::THETA] = 0.3;
        assert_eq!(ekf_measurement(&x)[9], -0.3);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..100 {
            let x = random_state(&mut rng);
            let h = ekf_jacobian(&x);
            let step = 1e-6;
            for j in 0..STATE_DIM {
                let mut xp = x;
                let mut xm = x;
                xp[j] += step;
                xm[j] -= step;
                let col = (ekf_measurement(&xp) - ekf_measurement(&xm)) / (2.0 * step);
                for i in 0..OBS_DIM {
                    let scale = h[(i, j)].abs().max(1.0);
                    assert!((h[(i, j)] - col[i]).abs() / scale < 1e-6, "H[{i},{j}]");
                }
            }
        }
    }

    #[test]
    fn jacobian_fixed_blocks() {
        let mut rng = StdRng::seed_from_u64(2);
        let x = random_state(&mut rng);
        let h = ekf_jacobian(&x);
        for i in 0..3 {
            for j in 0..STATE_DIM {
                assert_eq!(h[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
        for j in 0..STATE_DIM {
            assert_eq!(h[(9, j)], if j == idx::THETA { -1.0 } else { 0.0 });
        }
    }

    #[test]
    fn zero_residual_update_keeps_state() {
        let noise = NoiseConfig::from_params(&NoiseParams::default(), 0.05);
        let mut b = belief();
        b.x = StateVector::from_fn(|i, _| 0.1 * i as f64);
        let z = ekf_measurement(&b.x);
        let bundle = ObservationBundle {
            camera_fix: Some(z.fixed_rows::<3>(0).into_owned()),
            odom_position: Some(z.fixed_rows::<3>(3).into_owned()),
            odom_velocity: Some(z.fixed_rows::<3>(6).into_owned()),
            odom_yaw: Some(YawAngle::new(z[9])),
        };
        let out = ekf_update(&b, &bundle, &noise).unwrap();
        assert_relative_eq!(out.x, b.x, epsilon = 1e-12);
        assert!(out.p.trace() < b.p.trace());
    }

    #[test]
    fn diffuse_camera_fix_dominates() {
        let noise = NoiseConfig::from_params(&NoiseParams::default(), 0.05);
        let mut b = belief();
        b.p.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(nalgebra::Matrix3::identity() * 1e6));
        let fix = Vec3::new(1.0, -2.0, 0.5);
        let out = ekf_update(&b, &ObservationBundle::camera(fix), &noise).unwrap();
        assert!((out.position() - fix).norm() < 1e-3);
        assert_eq!(out.camera_fixes_accepted, 1);
        assert_eq!(out.last_camera_fix_age, 0.0);
    }

    #[test]
    fn empty_and_singular_updates_fail() {
        let noise = NoiseConfig::from_params(&NoiseParams::default(), 0.05);
        let b = belief();
        assert_eq!(
            ekf_update(&b, &ObservationBundle::default(), &noise),
            Err(EstimatorError::EmptyObservation)
        );
        let mut degenerate = noise.clone();
        degenerate.r = SMatrix::zeros();
        let mut b0 = b.clone();
        b0.p = StateMatrix::zeros();
        assert!(matches!(
            ekf_update(&b0, &ObservationBundle::camera(Vec3::zeros()), &degenerate),
            Err(EstimatorError::SingularInnovation(_))
        ));
    }

    #[test]
    fn yaw_residual_wraps() {
        let noise = NoiseConfig::from_params(&NoiseParams::default(), 0.05);
        let mut b = belief();
        b.x[idx::THETA] = -3.1; // predicts odom yaw 3.1
        let z = ObservationBundle {
            odom_yaw: Some(YawAngle::new(-3.1)),
            ..Default::default()
        };
        let out = ekf_update(&b, &z, &noise).unwrap();
        // true residual is +0.083 rad, not −6.2
        let moved = wrap_angle(out.x[idx::THETA] - b.x[idx::THETA]);
        assert!(moved.abs() < 0.1, "theta moved by {moved}");
    }

    #[test]
    fn sequential_linear_rows_match_joint_update() {
        let noise = NoiseConfig::from_params(&NoiseParams::default(), 0.05);
        let mut rng = StdRng::seed_from_u64(9);
        let mut b = belief();
        b.x = random_state(&mut rng);
        let cam = b.position() + Vec3::new(0.02, -0.03, 0.01);
        let yaw = YawAngle::new(-b.x[idx::THETA] + 0.01);
        let joint = ekf_update(
            &b,
            &ObservationBundle {
                camera_fix: Some(cam),
                odom_yaw: Some(yaw),
                ..Default::default()
            },
            &noise,
        )
        .unwrap();
        let first = ekf_update(&b, &ObservationBundle::camera(cam), &noise).unwrap();
        let second = ekf_update(
            &first,
            &ObservationBundle {
                odom_yaw: Some(yaw),
                ..Default::default()
            },
            &noise,
        )
        .unwrap();
        assert!((joint.x - second.x).norm() < 1e-9);
    }

    #[test]
    fn camera_only_never_shrinks_offset_variance() {
        let noise = NoiseConfig::from_params(&NoiseParams::default(), 0.05);
        let mut rng = StdRng::seed_from_u64(4);
        let mut b = belief();
        for _ in 0..200 {
            let before = b.p.diagonal();
            b = ekf_predict(&b, 0.05, &noise);
            let fix = Vec3::new(rng.random_range(-1.0..1.0), 0.0, 1.0);
            b = ekf_update(&b, &ObservationBundle::camera(fix), &noise).unwrap();
            for i in idx::U..=idx::PHI {
                assert!(b.p[(i, i)] >= before[i] - 1e-15);
            }
        }
    }

    #[test]
    fn gating_rules() {
        let pad = Pose::from_position(Vec3::new(1.0, 1.0, 0.0));
        let b = AnchorBelief::new(0, pad, &PriorParams::default());
        assert!(gate_camera_fix(&b, &Vec3::new(1.0, 1.0, 7.0), 0.5, true));
        assert!(!gate_camera_fix(&b, &Vec3::new(3.0, 1.0, 1.0), 0.5, true));
        assert!(gate_camera_fix(&b, &Vec3::new(1.2, 1.0, 0.2), 0.5, false));
        assert!(!gate_camera_fix(&b, &Vec3::new(1.0, 1.0, 0.6), 0.5, false));
    }

    #[test]
    fn seeding_zeroes_odometry_residual() {
        let mut b = AnchorBelief::new(0, Pose::from_position(Vec3::new(2.0, 0.0, 0.3)), &PriorParams::default());
        let odom = Vec3::new(0.1, -0.4, 0.0);
        b.seed_from_odometry(&odom, YawAngle::new(0.7));
        let z = ekf_measurement(&b.x);
        assert_relative_eq!(z.fixed_rows::<3>(3).into_owned(), odom, epsilon = 1e-12);
        assert_relative_eq!(z[9], 0.7, epsilon = 1e-12);
    }
}
