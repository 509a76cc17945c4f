//! The deterministic simulation loop.
//!
//! Physics steps at 1 kHz; IMU, SLAM and camera streams fire on integer
//! decimations of the physics clock; the EKF runs at IMU rate; autonomy,
//! control and telemetry share the 100 Hz control clock. Every run is a
//! pure function of `(config, seed)`.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::autonomy::{MissionExec, PayloadDirective, Phase, TransitionRecord};
use crate::control::{control_step, ControllerStates};
use crate::dynamics::{
    acceleration, step_dynamics, ControlCommand, PayloadAttachment, RigidBodyState, VehicleParams,
    PHYSICS_DT,
};
use crate::error::{Result, SimError};
use crate::estimation::{ekf_predict, ekf_update_pose, EkfState};
use crate::harness::config::{ExperimentKind, ScenarioConfig};
use crate::harness::metrics::{compute_report, MetricsReport, RunMeta, ServoMeta};
use crate::harness::telemetry::{
    write_events_csv, write_telemetry_csv, TelemetryRecord,
};
use crate::perception::InstanceMap;
use crate::rng::{stream_rng, Stream};
use crate::sensors::{
    sample_detections, sample_imu, sample_slam_pose, track_target, ImuBiasState, TrackerState,
};
use crate::world::{active_disturbance, build_scene, HarvestScene};

const PHYS_RATE: u64 = 1000;
const CONTROL_RATE: u64 = 100;

/// Everything a run produces, kept in memory; persisting is optional.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub records: Vec<TelemetryRecord>,
    pub events: Vec<crate::autonomy::GraspEvent>,
    pub transitions: Vec<TransitionRecord>,
    pub report: MetricsReport,
    pub meta: RunMeta,
    pub map_jsonl: String,
    pub final_phase: Phase,
}

/// True when a stream at `rate` Hz fires on physics tick `k` (1-based).
fn fires(k: u64, rate: u64) -> bool {
    (k * rate) / PHYS_RATE > ((k - 1) * rate) / PHYS_RATE
}

/// (timestamp, position, roll-pitch-yaw) truth snapshot for the SLAM
/// latency lookup.
type PoseSnapshot = (f64, Vector3<f64>, (f64, f64, f64));

struct TruthRing {
    buf: VecDeque<PoseSnapshot>,
}

impl TruthRing {
    fn new() -> Self {
        Self { buf: VecDeque::with_capacity(700) }
    }
    fn push(&mut self, t: f64, state: &RigidBodyState) {
        self.buf.push_back((t, state.p, state.euler_angles()));
        while self.buf.len() > 650 {
            self.buf.pop_front();
        }
    }
    fn nearest(&self, t: f64) -> Option<PoseSnapshot> {
        self.buf
            .iter()
            .min_by(|a, b| (a.0 - t).abs().partial_cmp(&(b.0 - t).abs()).unwrap())
            .copied()
    }
}

/// Runs one scenario to completion (duration cap, Disarm, or error).
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let seed = config.seed;
    let sensors = config.sensors.effective();
    let ekf_cfg = config.ekf.clone();

    // experiment-specific mission adjustments
    let mut mission = config.mission.clone();
    let mut scene_cfg = config.scene.clone();
    match config.experiment {
        ExperimentKind::Mission => {}
        ExperimentKind::HoverBench | ExperimentKind::DisturbBench => {
            mission.hold_hover = true;
            scene_cfg.fruits.clear();
            scene_cfg.random_fruits = 0;
        }
        ExperimentKind::ServoBench => {
            mission.servo_standoff = Some(config.servo.standoff);
            mission.timeouts.reach = f64::INFINITY;
            scene_cfg.fruits.clear();
            scene_cfg.random_fruits = 0;
            scene_cfg.fruits.push(crate::world::FruitSpec {
                pos: config.servo.base,
                radius: None,
                mass: None,
                detach_distance: None,
            });
        }
    }

    let mut rng_scene = stream_rng(seed, Stream::Scene);
    let mut scene: HarvestScene = build_scene(&scene_cfg, &mut rng_scene)?;

    let base_params: VehicleParams = config.vehicle.params()?;
    let battery = config.vehicle.battery.clone();

    let mut rng_imu = stream_rng(seed, Stream::ImuNoise);
    let mut rng_slam = stream_rng(seed, Stream::SlamNoise);
    let mut rng_det = stream_rng(seed, Stream::Detector);
    let mut rng_trk = stream_rng(seed, Stream::Tracker);
    let mut rng_mission = stream_rng(seed, Stream::Mission);

    let mut imu_bias = ImuBiasState::init(&sensors.imu, &mut rng_imu);

    let mut truth = RigidBodyState::at_rest(scene.takeoff_point);
    let mut ekf = EkfState::new(scene.takeoff_point, 0.0, 0.0, &ekf_cfg);
    let mut exec = MissionExec::new(mission.clone(), sensors.camera.clone(), &scene);
    let mut map = InstanceMap::default();
    let mut tracker = TrackerState::default();
    let mut ctrl_states = ControllerStates::new(&config.control);
    let mut payload: Option<PayloadAttachment> = None;
    let mut cmd = ControlCommand::zero();
    let mut motors_on = true;
    let mut ring = TruthRing::new();
    ring.push(0.0, &truth);

    let mut records: Vec<TelemetryRecord> = Vec::new();
    let mut last_imu_t = 0.0_f64;
    let mut servo_script_start: Option<f64> = None;
    let mut grounded = true;

    let ground_z = scene.takeoff_point.z;
    let steps = (config.duration * PHYS_RATE as f64).round() as u64;

    for k in 1..=steps {
        let t_prev = (k - 1) as f64 * PHYSICS_DT;
        let t = k as f64 * PHYSICS_DT;

        let mut params = base_params.clone();
        params.thrust_effectiveness =
            battery.as_ref().map(|b| b.effectiveness(t_prev)).unwrap_or(1.0);

        // scripted moving target for the servo bench; starts once servoing does
        if config.experiment == ExperimentKind::ServoBench {
            if let Some(t0) = servo_script_start {
                scene.fruits[0].position = Vector3::from(config.servo.target_at(t_prev, t0));
            }
        }

        let f_e = active_disturbance(&scene.disturbances, t_prev);
        let applied_cmd = if motors_on { cmd } else { ControlCommand::zero() };

        // ground contact holds the whole state until lift exceeds weight,
        // so the IMU sees a genuinely motionless vehicle during spin-up
        let weight = (params.mass + payload.as_ref().map(|p| p.mass).unwrap_or(0.0)) * params.g;
        let lift =
            params.thrust_effectiveness * applied_cmd.thrust * (truth.rot * Vector3::z()).z;
        if grounded && lift <= weight {
            truth.t = t;
        } else {
            grounded = false;
            truth =
                step_dynamics(&truth, &applied_cmd, &params, payload.as_ref(), &f_e, PHYSICS_DT)?;
            if truth.p.z <= ground_z && truth.v.z <= 0.0 {
                grounded = true;
                truth.p.z = ground_z;
                truth.v = Vector3::zeros();
                truth.omega = Vector3::zeros();
            }
        }
        let a_world = if grounded {
            Vector3::zeros()
        } else {
            acceleration(&truth.rot, &truth.v, applied_cmd.thrust, &params, payload.as_ref(), &f_e)
        };
        if !truth.p.iter().all(|x| x.is_finite()) {
            return Err(SimError::NonFinite("simulation diverged"));
        }
        ring.push(t, &truth);

        // IMU -> EKF predict
        if fires(k, sensors.imu_rate_hz) {
            let dt_imu = t - last_imu_t;
            let imu =
                sample_imu(&truth, &a_world, &params, &sensors.imu, &mut imu_bias, dt_imu, &mut rng_imu);
            last_imu_t = t;
            ekf_predict(&mut ekf, &imu, dt_imu, &ekf_cfg)?;
        }

        // SLAM pose -> EKF update, latency handled by history lookup
        if fires(k, sensors.slam_rate_hz) {
            let t_meas = t - sensors.slam.latency;
            if t_meas >= 0.0 {
                if let Some((tm, p, rpy)) = ring.nearest(t_meas) {
                    let slam = sample_slam_pose(&p, rpy, tm, &sensors.slam, &mut rng_slam);
                    ekf_update_pose(&mut ekf, &slam, &ekf_cfg)?;
                }
            }
        }

        // camera frame -> detections, tracker, instance map
        if fires(k, sensors.camera_rate_hz) && exec.phase.airborne() {
            let est = ekf.snapshot();
            let detections =
                sample_detections(&truth, &est.p, &est.rot, &scene, &sensors, &mut rng_det);

            let target_centroid = exec.target.and_then(|id| map.query_target(id).ok());
            match (exec.target, target_centroid) {
                (Some(_), Some(centroid)) => {
                    if !tracker.active {
                        let body = est.rot.transpose() * (centroid - est.p);
                        let pixel = sensors.camera.project(&body).unwrap_or((0.0, 0.0));
                        tracker = TrackerState::acquire(pixel);
                    }
                    let (next, _idx) = track_target(
                        &tracker,
                        &detections,
                        Some(&centroid),
                        &sensors.tracker,
                        &mut rng_trk,
                    );
                    tracker = next;
                    // a lost tracker stops feeding the target's instance; the
                    // map keeps serving its last centroid
                    let centroids: Vec<Vector3<f64>> = detections
                        .iter()
                        .map(|d| d.centroid_3d)
                        .filter(|c| !(tracker.lost && (c - centroid).norm() <= map.assoc_gate))
                        .collect();
                    map.update(&centroids, t);
                }
                _ => {
                    tracker = TrackerState::default();
                    let centroids: Vec<Vector3<f64>> =
                        detections.iter().map(|d| d.centroid_3d).collect();
                    map.update(&centroids, t);
                }
            }
        }

        // autonomy + control + telemetry (100 Hz)
        if fires(k, CONTROL_RATE) {
            let est = ekf.snapshot();
            let kill = config.kill_at.map(|kt| t >= kt).unwrap_or(false);
            let directives =
                exec.tick(t, &est, &truth, kill, &mut map, &mut scene, &mut rng_mission);

            match directives.payload {
                PayloadDirective::Keep => {}
                PayloadDirective::Attach(p) => payload = Some(p),
                PayloadDirective::Release => payload = None,
            }
            if exec.phase == Phase::ReachTarget && servo_script_start.is_none() {
                servo_script_start = Some(t);
            }

            motors_on = directives.motors_on;
            if motors_on {
                cmd = control_step(
                    &est,
                    t,
                    &directives.setpoint,
                    &directives.modes,
                    &config.control,
                    config.vehicle.mass,
                    config.vehicle.g,
                    base_params.max_thrust,
                    &mut ctrl_states,
                    1.0 / CONTROL_RATE as f64,
                )?;
            } else {
                cmd = ControlCommand::zero();
            }

            let (roll, pitch, yaw) = truth.euler_angles();
            let (eroll, epitch, eyaw) = {
                let r = nalgebra::Rotation3::from_matrix_unchecked(est.rot);
                r.euler_angles()
            };
            records.push(TelemetryRecord {
                t,
                p: [truth.p.x, truth.p.y, truth.p.z],
                rpy: [roll, pitch, yaw],
                p_est: [est.p.x, est.p.y, est.p.z],
                rpy_est: [eroll, epitch, eyaw],
                sp: [
                    directives.setpoint.p_des.x,
                    directives.setpoint.p_des.y,
                    directives.setpoint.p_des.z,
                ],
                phase: exec.phase,
                thrust: cmd.thrust,
                cmd_rpy: [cmd.roll, cmd.pitch, cmd.yaw],
                thrust_eff: params.thrust_effectiveness,
                target_id: exec.target.map(|x| x as i64).unwrap_or(-1),
                tracker_lost: tracker.active && tracker.lost,
            });

            if exec.target.is_none() {
                tracker = TrackerState::default();
            }
            if exec.done() {
                break;
            }
        }
    }

    let meta = RunMeta {
        schema_version: crate::harness::config::SCHEMA_VERSION,
        experiment: config.experiment,
        seed,
        measure_start: config.effective_measure_start(),
        arm_offset: scene.gripper.arm_offset,
        servo: if config.experiment == ExperimentKind::ServoBench {
            servo_script_start.map(|t0| ServoMeta { script: config.servo.clone(), script_start: t0 })
        } else {
            None
        },
    };

    // every run self-checks its phase log against the legal edge set
    let phases: Vec<Phase> = records.iter().map(|r| r.phase).collect();
    if let Err((a, b)) = crate::autonomy::validate_phase_sequence(&phases) {
        return Err(SimError::Config(format!(
            "illegal phase edge {} -> {} in transition log",
            a.name(),
            b.name()
        )));
    }
    for w in records.windows(2) {
        if w[1].t <= w[0].t {
            return Err(SimError::Config("telemetry timestamps not strictly increasing".into()));
        }
    }

    let report = compute_report(&records, &exec.events, &meta);
    let mut map_jsonl = Vec::new();
    map.dump_jsonl(&mut map_jsonl)?;

    Ok(RunArtifacts {
        records,
        events: exec.events.clone(),
        transitions: exec.transitions.clone(),
        report,
        meta,
        map_jsonl: String::from_utf8(map_jsonl).expect("json is utf8"),
        final_phase: exec.phase,
    })
}

impl RunArtifacts {
    /// Writes telemetry.csv, events.csv, metrics.json, run_meta.json and
    /// map.jsonl into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut tele = Vec::new();
        write_telemetry_csv(&mut tele, &self.records)?;
        fs::write(dir.join("telemetry.csv"), tele)?;

        let mut ev = Vec::new();
        write_events_csv(&mut ev, &self.events)?;
        fs::write(dir.join("events.csv"), ev)?;

        fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&self.report)?)?;
        fs::write(dir.join("run_meta.json"), serde_json::to_string_pretty(&self.meta)?)?;
        fs::write(dir.join("map.jsonl"), &self.map_jsonl)?;
        Ok(())
    }
}


/// Recomputes the metrics report from persisted telemetry. `telemetry_path`
/// points at telemetry.csv; events.csv and run_meta.json are discovered next
/// to it.
pub fn replay_metrics(telemetry_path: &Path) -> Result<MetricsReport> {
    let dir = telemetry_path.parent().unwrap_or(Path::new("."));
    let tele_file = fs::File::open(telemetry_path)?;
    let records = crate::harness::telemetry::read_telemetry_csv(std::io::BufReader::new(tele_file))?;

    let events_path = dir.join("events.csv");
    let events = if events_path.exists() {
        let f = fs::File::open(events_path)?;
        crate::harness::telemetry::read_events_csv(std::io::BufReader::new(f))?
    } else {
        Vec::new()
    };

    let meta: RunMeta = serde_json::from_str(&fs::read_to_string(dir.join("run_meta.json"))?)?;
    Ok(compute_report(&records, &events, &meta))
}
