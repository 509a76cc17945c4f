//! Simulated sensor streams: IMU, SLAM pose, depth, fruit detections and the
//! color tracker.
//!
//! Every stream is a deterministic function of (ground truth, clock, its own
//! RNG). With all noise zeroed and dropout off each sensor returns exact
//! ground truth, modulo the SLAM latency contract.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{RigidBodyState, VehicleParams};
use crate::world::HarvestScene;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImuNoiseConfig {
    /// White noise std per sample, m/s^2.
    pub sigma_a: f64,
    /// White noise std per sample, rad/s.
    pub sigma_g: f64,
    /// Std of the initial bias draw.
    pub bias_a_init_std: f64,
    pub bias_g_init_std: f64,
    /// Bias random-walk densities, per sqrt(s).
    pub bias_a_rw: f64,
    pub bias_g_rw: f64,
}

impl Default for ImuNoiseConfig {
    fn default() -> Self {
        Self {
            sigma_a: 0.05,
            sigma_g: 0.002,
            bias_a_init_std: 0.02,
            bias_g_init_std: 0.001,
            bias_a_rw: 2e-4,
            bias_g_rw: 2e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlamNoiseConfig {
    /// Position noise std per axis, meters.
    pub sigma_p: f64,
    /// Angle noise std per axis, degrees.
    pub sigma_ang_deg: f64,
    /// Delivery latency, seconds.
    pub latency: f64,
    /// Probability that a sample arrives with valid = false.
    pub dropout_prob: f64,
}

impl Default for SlamNoiseConfig {
    fn default() -> Self {
        Self { sigma_p: 0.015, sigma_ang_deg: 0.5, latency: 0.020, dropout_prob: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthNoiseConfig {
    /// Distance-proportional std coefficient: sigma(d) = coeff * d.
    pub coeff: f64,
    /// Cap on the std, meters.
    pub sigma_cap: f64,
    /// Hard truncation of the error magnitude, meters.
    pub bound: f64,
}

impl Default for DepthNoiseConfig {
    fn default() -> Self {
        Self { coeff: 0.01, sigma_cap: 0.015, bound: 0.03 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Per-frame detection probability for a visible fruit.
    pub p_det: f64,
    /// Angular separation below which a nearer fruit occludes a farther one,
    /// radians.
    pub occlusion_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { p_det: 0.95, occlusion_threshold: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Per-frame tracking failure probability.
    pub p_fail: f64,
    /// Pixel-space association gate, radians.
    pub pixel_gate: f64,
    /// A lost tracker re-locks when a detection lies within this distance of
    /// the instance-map centroid, meters.
    pub reacquire_dist: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { p_fail: 0.02, pixel_gate: 0.10, reacquire_dist: 0.10 }
    }
}

/// Angular camera model (D435i-like field of view).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraModel {
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    pub max_range: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { fov_h_deg: 69.0, fov_v_deg: 42.0, max_range: 3.0 }
    }
}

impl CameraModel {
    /// The camera looks along body +x. `point_body` is the target in the
    /// body frame; returns (azimuth, elevation) in radians when inside the
    /// field of view and range.
    pub fn project(&self, point_body: &Vector3<f64>) -> Option<(f64, f64)> {
        if point_body.x <= 0.0 {
            return None;
        }
        let range = point_body.norm();
        if range > self.max_range {
            return None;
        }
        let az = point_body.y.atan2(point_body.x);
        let el = point_body.z.atan2(point_body.x);
        if az.abs() > self.fov_h_deg.to_radians() / 2.0 || el.abs() > self.fov_v_deg.to_radians() / 2.0 {
            return None;
        }
        Some((az, el))
    }
}

/// Sensor section of the scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorsConfig {
    pub imu_rate_hz: u64,
    /// At most 60 Hz.
    pub slam_rate_hz: u64,
    pub camera_rate_hz: u64,
    pub imu: ImuNoiseConfig,
    pub slam: SlamNoiseConfig,
    pub depth: DepthNoiseConfig,
    pub detector: DetectorConfig,
    pub tracker: TrackerConfig,
    pub camera: CameraModel,
    /// When true every noise/dropout/failure knob is forced to zero and
    /// sensors return exact ground truth.
    pub noiseless: bool,
}

impl Default for SensorsConfig {
    fn default() -> Self {
        Self {
            imu_rate_hz: 200,
            slam_rate_hz: 60,
            camera_rate_hz: 30,
            imu: ImuNoiseConfig::default(),
            slam: SlamNoiseConfig::default(),
            depth: DepthNoiseConfig::default(),
            detector: DetectorConfig::default(),
            tracker: TrackerConfig::default(),
            camera: CameraModel::default(),
            noiseless: false,
        }
    }
}

impl SensorsConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.slam_rate_hz == 0 || self.slam_rate_hz > 60 {
            return Err(crate::SimError::Config(format!(
                "slam_rate_hz {} outside [1, 60]",
                self.slam_rate_hz
            )));
        }
        if self.imu_rate_hz == 0 || self.imu_rate_hz > 1000 || self.camera_rate_hz == 0 {
            return Err(crate::SimError::Config("sensor rates out of range".into()));
        }
        Ok(())
    }

    /// Resolves the `noiseless` switch into concrete parameters.
    pub fn effective(&self) -> SensorsConfig {
        if !self.noiseless {
            return self.clone();
        }
        SensorsConfig {
            imu_rate_hz: self.imu_rate_hz,
            slam_rate_hz: self.slam_rate_hz,
            camera_rate_hz: self.camera_rate_hz,
            imu: ImuNoiseConfig {
                sigma_a: 0.0,
                sigma_g: 0.0,
                bias_a_init_std: 0.0,
                bias_g_init_std: 0.0,
                bias_a_rw: 0.0,
                bias_g_rw: 0.0,
            },
            slam: SlamNoiseConfig { sigma_p: 0.0, sigma_ang_deg: 0.0, latency: 0.0, dropout_prob: 0.0 },
            depth: DepthNoiseConfig { coeff: 0.0, sigma_cap: 0.0, bound: self.depth.bound },
            detector: DetectorConfig { p_det: 1.0, occlusion_threshold: self.detector.occlusion_threshold },
            tracker: TrackerConfig { p_fail: 0.0, ..self.tracker.clone() },
            camera: self.camera.clone(),
            noiseless: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImuSample {
    /// Body-frame specific force, m/s^2.
    pub accel: Vector3<f64>,
    /// Body-frame angular rate, rad/s.
    pub gyro: Vector3<f64>,
    pub t: f64,
}

/// Truth-side IMU bias state, random-walked between samples.
#[derive(Debug, Clone, Default)]
pub struct ImuBiasState {
    pub bias_a: Vector3<f64>,
    pub bias_g: Vector3<f64>,
}

impl ImuBiasState {
    /// Draws the initial biases from the configured priors.
    pub fn init(cfg: &ImuNoiseConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            bias_a: gauss_vec(cfg.bias_a_init_std, rng),
            bias_g: gauss_vec(cfg.bias_g_init_std, rng),
        }
    }
}

fn gauss(std: f64, rng: &mut ChaCha8Rng) -> f64 {
    if std <= 0.0 {
        // keep the draw so stream alignment does not depend on the value
        let _ = rng.gen::<f64>();
        return 0.0;
    }
    Normal::new(0.0, std).unwrap().sample(rng)
}

fn gauss_vec(std: f64, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(gauss(std, rng), gauss(std, rng), gauss(std, rng))
}

/// IMU measurement at the current state. `a_world` is the vehicle's true
/// world-frame acceleration; the accelerometer reports specific force
/// (acceleration plus gravity, rotated to body) plus bias and white noise.
/// Biases random-walk with the configured densities.
pub fn sample_imu(
    state: &RigidBodyState,
    a_world: &Vector3<f64>,
    params: &VehicleParams,
    cfg: &ImuNoiseConfig,
    bias: &mut ImuBiasState,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> ImuSample {
    bias.bias_a += gauss_vec(cfg.bias_a_rw * dt.sqrt(), rng);
    bias.bias_g += gauss_vec(cfg.bias_g_rw * dt.sqrt(), rng);
    let specific_force = state.rot.transpose() * (a_world + Vector3::new(0.0, 0.0, params.g));
    ImuSample {
        accel: specific_force + bias.bias_a + gauss_vec(cfg.sigma_a, rng),
        gyro: state.omega + bias.bias_g + gauss_vec(cfg.sigma_g, rng),
        t: state.t,
    }
}

#[derive(Debug, Clone)]
pub struct SlamPoseSample {
    pub p: Vector3<f64>,
    /// (roll, pitch, yaw), radians.
    pub rpy: (f64, f64, f64),
    /// Measurement timestamp (capture time, i.e. delivery time minus latency).
    pub t: f64,
    pub valid: bool,
}

/// SLAM pose measurement of a past truth pose. The caller supplies the truth
/// pose captured `latency` seconds ago together with its timestamp.
pub fn sample_slam_pose(
    p_truth: &Vector3<f64>,
    rpy_truth: (f64, f64, f64),
    t_meas: f64,
    cfg: &SlamNoiseConfig,
    rng: &mut ChaCha8Rng,
) -> SlamPoseSample {
    let sigma_ang = cfg.sigma_ang_deg.to_radians();
    let p = p_truth + gauss_vec(cfg.sigma_p, rng);
    let d_ang = gauss_vec(sigma_ang, rng);
    let valid = if cfg.dropout_prob > 0.0 { rng.gen::<f64>() >= cfg.dropout_prob } else { true };
    SlamPoseSample {
        p,
        rpy: (rpy_truth.0 + d_ang.x, rpy_truth.1 + d_ang.y, rpy_truth.2 + d_ang.z),
        t: t_meas,
        valid,
    }
}

#[derive(Debug, Clone)]
pub struct DepthSample {
    pub range_truth: f64,
    pub range_measured: f64,
    pub t: f64,
}

/// Range measurement with distance-proportional Gaussian noise, hard-bounded
/// to the sensor tolerance.
pub fn sample_depth(range_truth: f64, t: f64, cfg: &DepthNoiseConfig, rng: &mut ChaCha8Rng) -> DepthSample {
    let sigma = (cfg.coeff * range_truth).min(cfg.sigma_cap);
    let noise = gauss(sigma, rng).clamp(-cfg.bound, cfg.bound);
    DepthSample { range_truth, range_measured: range_truth + noise, t }
}

#[derive(Debug, Clone)]
pub struct DetectionSample {
    /// Simulation-only key; hidden from the autonomy stack.
    pub fruit_id_truth: u32,
    /// World-frame centroid reconstructed from the measured depth and the
    /// estimated camera pose.
    pub centroid_3d: Vector3<f64>,
    /// (azimuth, elevation) of the detection center, radians.
    pub pixel_center: (f64, f64),
    pub range_truth: f64,
    pub t: f64,
}

/// Detections of attached fruits visible from the true camera pose. Bearing
/// is exact; depth is noisy; the world centroid is reconstructed through the
/// *estimated* pose, so estimation error propagates into the map like it
/// does on the vehicle.
pub fn sample_detections(
    truth: &RigidBodyState,
    est_p: &Vector3<f64>,
    est_rot: &Matrix3<f64>,
    scene: &HarvestScene,
    cfg: &SensorsConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<DetectionSample> {
    struct Candidate {
        id: u32,
        body: Vector3<f64>,
        range: f64,
        pixel: (f64, f64),
    }

    let mut candidates: Vec<Candidate> = Vec::new();
    for fruit in scene.attached_fruits() {
        let body = truth.rot.transpose() * (fruit.position - truth.p);
        if let Some(pixel) = cfg.camera.project(&body) {
            candidates.push(Candidate { id: fruit.id, body, range: body.norm(), pixel });
        }
    }

    // nearer fruit suppresses a farther one at small angular separation
    let occluded: Vec<bool> = candidates
        .iter()
        .map(|c| {
            candidates.iter().any(|other| {
                other.range < c.range
                    && c.body.normalize().dot(&other.body.normalize()).clamp(-1.0, 1.0).acos()
                        < cfg.detector.occlusion_threshold
            })
        })
        .collect();

    let mut out = Vec::new();
    for (c, occ) in candidates.iter().zip(occluded) {
        let detected = if cfg.detector.p_det >= 1.0 {
            let _ = rng.gen::<f64>();
            true
        } else {
            rng.gen::<f64>() < cfg.detector.p_det
        };
        if occ || !detected {
            continue;
        }
        let depth = sample_depth(c.range, truth.t, &cfg.depth, rng);
        let dir_body = c.body / c.range;
        let centroid = est_p + est_rot * (dir_body * depth.range_measured);
        out.push(DetectionSample {
            fruit_id_truth: c.id,
            centroid_3d: centroid,
            pixel_center: c.pixel,
            range_truth: c.range,
            t: truth.t,
        });
    }
    out
}

/// Color-tracker lock state for the selected target.
#[derive(Debug, Clone, Default)]
pub struct TrackerState {
    pub active: bool,
    pub lost: bool,
    pub frames_lost: u32,
    pub last_pixel: (f64, f64),
}

impl TrackerState {
    pub fn acquire(pixel: (f64, f64)) -> Self {
        Self { active: true, lost: false, frames_lost: 0, last_pixel: pixel }
    }
}

/// Advances the tracker by one camera frame. Association is by pixel
/// proximity against the last locked pixel; a lost tracker re-locks when a
/// detection lies close to the instance-map centroid of the target. Returns
/// the new state and the index of the associated detection, if any.
pub fn track_target(
    prev: &TrackerState,
    detections: &[DetectionSample],
    map_centroid: Option<&Vector3<f64>>,
    cfg: &TrackerConfig,
    rng: &mut ChaCha8Rng,
) -> (TrackerState, Option<usize>) {
    if !prev.active {
        return (prev.clone(), None);
    }
    let mut st = prev.clone();

    if st.lost {
        // reacquisition against the map
        if let Some(centroid) = map_centroid {
            let hit = detections
                .iter()
                .enumerate()
                .filter(|(_, d)| (d.centroid_3d - centroid).norm() <= cfg.reacquire_dist)
                .min_by(|(_, a), (_, b)| {
                    let da = (a.centroid_3d - centroid).norm();
                    let db = (b.centroid_3d - centroid).norm();
                    da.partial_cmp(&db).unwrap()
                });
            if let Some((idx, det)) = hit {
                st.lost = false;
                st.frames_lost = 0;
                st.last_pixel = det.pixel_center;
                return (st, Some(idx));
            }
        }
        st.frames_lost += 1;
        return (st, None);
    }

    let nearest = detections
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let dp = (d.pixel_center.0 - st.last_pixel.0, d.pixel_center.1 - st.last_pixel.1);
            (i, (dp.0 * dp.0 + dp.1 * dp.1).sqrt())
        })
        .filter(|(_, dist)| *dist <= cfg.pixel_gate)
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

    let fail_draw = rng.gen::<f64>();
    match nearest {
        Some((idx, _)) if fail_draw >= cfg.p_fail => {
            st.lost = false;
            st.frames_lost = 0;
            st.last_pixel = detections[idx].pixel_center;
            (st, Some(idx))
        }
        _ => {
            // occlusion (no detection in the gate) or a per-frame failure
            st.lost = true;
            st.frames_lost += 1;
            (st, None)
        }
    }
}
