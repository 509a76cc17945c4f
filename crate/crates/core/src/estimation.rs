//! Error-state extended Kalman filter fusing IMU propagation with SLAM pose
//! updates.
//!
//! The nominal state is (position, velocity, attitude quaternion,
//! accelerometer bias, gyro bias); the 15-dimensional error state is
//! [dp, dv, dtheta, dba, dbg] with the attitude error on the right
//! (body side) of the nominal quaternion. Prediction runs on the IMU clock,
//! so the estimate stream comes out at IMU rate; pose updates arrive at the
//! SLAM rate with latency handled by differencing against a short history of
//! past states.

use std::collections::VecDeque;

use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::skew;
use crate::error::{Result, SimError};
use crate::sensors::{ImuSample, SlamPoseSample};

type Mat15 = SMatrix<f64, 15, 15>;
type Vec15 = SVector<f64, 15>;
type Mat6x15 = SMatrix<f64, 6, 15>;
type Mat6 = SMatrix<f64, 6, 6>;
type Vec6 = SVector<f64, 6>;

/// Filter tuning. All noise parameters must be strictly positive; the
/// simulator's zero-noise scenarios use small floors instead of exact zeros.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EkfConfig {
    /// Accel white-noise std per sample, m/s^2.
    pub sigma_a: f64,
    /// Gyro white-noise std per sample, rad/s.
    pub sigma_g: f64,
    /// Bias random-walk densities, per sqrt(s).
    pub sigma_ba_rw: f64,
    pub sigma_bg_rw: f64,
    /// SLAM position measurement std, meters.
    pub sigma_p_meas: f64,
    /// SLAM attitude measurement std, radians.
    pub sigma_ang_meas: f64,
    pub init_std_p: f64,
    pub init_std_v: f64,
    pub init_std_ang: f64,
    pub init_std_ba: f64,
    pub init_std_bg: f64,
    /// Innovation gate in standard deviations.
    pub gate_sigma: f64,
    /// History horizon for latency compensation, seconds.
    pub history_horizon: f64,
    pub g: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            sigma_a: 0.05,
            sigma_g: 0.002,
            sigma_ba_rw: 2e-4,
            sigma_bg_rw: 2e-5,
            sigma_p_meas: 0.015,
            sigma_ang_meas: 0.5f64.to_radians(),
            init_std_p: 0.02,
            init_std_v: 0.05,
            init_std_ang: 0.01,
            init_std_ba: 0.02,
            init_std_bg: 0.001,
            gate_sigma: 5.0,
            history_horizon: 0.5,
            g: 9.81,
        }
    }
}

impl EkfConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma_a,
            self.sigma_g,
            self.sigma_ba_rw,
            self.sigma_bg_rw,
            self.sigma_p_meas,
            self.sigma_ang_meas,
            self.init_std_p,
            self.init_std_v,
            self.init_std_ang,
            self.init_std_ba,
            self.init_std_bg,
        ];
        if all.iter().any(|&x| x <= 0.0) {
            return Err(SimError::Config("all EKF noise parameters must be > 0".into()));
        }
        Ok(())
    }
}

/// Immutable estimate handed to control and autonomy.
#[derive(Debug, Clone)]
pub struct EstimateSnapshot {
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub rot: Matrix3<f64>,
    pub yaw: f64,
    /// World-frame acceleration from the latest accelerometer sample,
    /// rotated with the estimated attitude and with nominal gravity removed.
    pub a_world: Vector3<f64>,
}

/// Outcome of a pose update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// Sample had valid = false; no-op.
    Invalid,
    /// Innovation gate rejected the sample.
    Rejected,
}

#[derive(Debug, Clone)]
pub struct EkfState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
    pub ba: Vector3<f64>,
    pub bg: Vector3<f64>,
    pub cov: Mat15,
    pub t: f64,
    /// Latest raw-accelerometer world acceleration (no bias correction).
    pub a_world: Vector3<f64>,
    pub outliers_rejected: u32,
    history: VecDeque<(f64, Vector3<f64>, UnitQuaternion<f64>)>,
}

impl EkfState {
    /// Initializes the filter at a known pose with the configured initial
    /// covariance.
    pub fn new(p: Vector3<f64>, yaw: f64, t: f64, cfg: &EkfConfig) -> Self {
        let mut cov = Mat15::zeros();
        for i in 0..3 {
            cov[(i, i)] = cfg.init_std_p.powi(2);
            cov[(3 + i, 3 + i)] = cfg.init_std_v.powi(2);
            cov[(6 + i, 6 + i)] = cfg.init_std_ang.powi(2);
            cov[(9 + i, 9 + i)] = cfg.init_std_ba.powi(2);
            cov[(12 + i, 12 + i)] = cfg.init_std_bg.powi(2);
        }
        Self {
            p,
            v: Vector3::zeros(),
            q: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            ba: Vector3::zeros(),
            bg: Vector3::zeros(),
            cov,
            t,
            a_world: Vector3::zeros(),
            outliers_rejected: 0,
            history: VecDeque::new(),
        }
    }

    pub fn snapshot(&self) -> EstimateSnapshot {
        let rot = *self.q.to_rotation_matrix().matrix();
        EstimateSnapshot {
            t: self.t,
            p: self.p,
            v: self.v,
            rot,
            yaw: self.q.euler_angles().2,
            a_world: self.a_world,
        }
    }

    fn push_history(&mut self, cfg: &EkfConfig) {
        self.history.push_back((self.t, self.p, self.q));
        let horizon = cfg.history_horizon.max(0.05);
        while let Some(&(t0, _, _)) = self.history.front() {
            if self.t - t0 > horizon {
                self.history.pop_front();
            } else {
                break;
            }
        }
    }

    fn stored_pose_nearest(&self, t: f64) -> Option<(Vector3<f64>, UnitQuaternion<f64>)> {
        self.history
            .iter()
            .min_by(|a, b| (a.0 - t).abs().partial_cmp(&(b.0 - t).abs()).unwrap())
            .map(|&(_, p, q)| (p, q))
    }
}

/// Strapdown propagation with first-order covariance Jacobians.
pub fn ekf_predict(ekf: &mut EkfState, imu: &ImuSample, dt: f64, cfg: &EkfConfig) -> Result<()> {
    if !(dt > 0.0 && dt <= 0.02) {
        return Err(SimError::Config(format!("ekf predict dt {dt} outside (0, 0.02]")));
    }
    if !(imu.accel.iter().all(|x| x.is_finite()) && imu.gyro.iter().all(|x| x.is_finite())) {
        return Err(SimError::NonFinite("ekf_predict imu"));
    }

    let a_body = imu.accel - ekf.ba;
    let w_body = imu.gyro - ekf.bg;
    let r = *ekf.q.to_rotation_matrix().matrix();
    let g_vec = Vector3::new(0.0, 0.0, cfg.g);
    let a_world = r * a_body - g_vec;

    // raw (bias-uncorrected) world acceleration, the accelerometer-feedback
    // signal consumed by the thrust controller
    ekf.a_world = r * imu.accel - g_vec;

    ekf.p += ekf.v * dt + 0.5 * a_world * dt * dt;
    ekf.v += a_world * dt;
    ekf.q *= UnitQuaternion::from_scaled_axis(w_body * dt);
    ekf.q.renormalize();
    ekf.t = imu.t;

    let mut f = Mat15::identity();
    let i3 = Matrix3::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(i3 * dt));
    f.fixed_view_mut::<3, 3>(3, 6).copy_from(&(-r * skew(&a_body) * dt));
    f.fixed_view_mut::<3, 3>(3, 9).copy_from(&(-r * dt));
    f.fixed_view_mut::<3, 3>(6, 6).copy_from(&(i3 - skew(&w_body) * dt));
    f.fixed_view_mut::<3, 3>(6, 12).copy_from(&(-i3 * dt));

    let mut q_noise = Mat15::zeros();
    for i in 0..3 {
        q_noise[(3 + i, 3 + i)] = (cfg.sigma_a * dt).powi(2);
        q_noise[(6 + i, 6 + i)] = (cfg.sigma_g * dt).powi(2);
        q_noise[(9 + i, 9 + i)] = cfg.sigma_ba_rw.powi(2) * dt;
        q_noise[(12 + i, 12 + i)] = cfg.sigma_bg_rw.powi(2) * dt;
    }

    ekf.cov = f * ekf.cov * f.transpose() + q_noise;
    ekf.cov = (ekf.cov + ekf.cov.transpose()) * 0.5;
    ekf.push_history(cfg);
    Ok(())
}

/// EKF update on a 6-DoF SLAM pose. The residual is formed against the
/// stored state nearest the measurement timestamp; the correction applies to
/// the current state. Innovations beyond `gate_sigma` per component reject
/// the whole sample.
pub fn ekf_update_pose(ekf: &mut EkfState, slam: &SlamPoseSample, cfg: &EkfConfig) -> Result<UpdateOutcome> {
    if !slam.valid {
        return Ok(UpdateOutcome::Invalid);
    }
    if !slam.p.iter().all(|x| x.is_finite()) {
        return Err(SimError::NonFinite("ekf_update_pose slam"));
    }

    let (p_ref, q_ref) = ekf.stored_pose_nearest(slam.t).unwrap_or((ekf.p, ekf.q));
    let q_meas = UnitQuaternion::from_euler_angles(slam.rpy.0, slam.rpy.1, slam.rpy.2);

    let mut resid = Vec6::zeros();
    resid.fixed_rows_mut::<3>(0).copy_from(&(slam.p - p_ref));
    resid.fixed_rows_mut::<3>(3).copy_from(&(q_ref.inverse() * q_meas).scaled_axis());

    let mut h = Mat6x15::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    h.fixed_view_mut::<3, 3>(3, 6).copy_from(&Matrix3::identity());

    let mut r_meas = Mat6::zeros();
    for i in 0..3 {
        r_meas[(i, i)] = cfg.sigma_p_meas.powi(2);
        r_meas[(3 + i, 3 + i)] = cfg.sigma_ang_meas.powi(2);
    }

    let s = h * ekf.cov * h.transpose() + r_meas;
    for i in 0..6 {
        if resid[i].abs() > cfg.gate_sigma * s[(i, i)].sqrt() {
            ekf.outliers_rejected += 1;
            return Ok(UpdateOutcome::Rejected);
        }
    }

    let s_inv = s.try_inverse().ok_or(SimError::NonFinite("innovation covariance"))?;
    let k = ekf.cov * h.transpose() * s_inv;
    let delta: Vec15 = k * resid;

    ekf.p += delta.fixed_rows::<3>(0).into_owned();
    ekf.v += delta.fixed_rows::<3>(3).into_owned();
    ekf.q *= UnitQuaternion::from_scaled_axis(delta.fixed_rows::<3>(6).into_owned());
    ekf.q.renormalize();
    ekf.ba += delta.fixed_rows::<3>(9).into_owned();
    ekf.bg += delta.fixed_rows::<3>(12).into_owned();

    // Joseph form keeps the covariance PSD and never grows the trace
    let ikh = Mat15::identity() - k * h;
    ekf.cov = ikh * ekf.cov * ikh.transpose() + k * r_meas * k.transpose();
    ekf.cov = (ekf.cov + ekf.cov.transpose()) * 0.5;
    Ok(UpdateOutcome::Applied)
}
