//! The end-to-end mission state machine: arm, take off, hover, detect,
//! select, reach by visual servoing, grasp, deliver, land, disarm.
//!
//! One executive instance orchestrates a mission. It reads estimate and map
//! snapshots, writes setpoints, axis modes and gripper commands, and records
//! every phase transition plus one grasp event per selection. Ground truth
//! enters exactly one place: the jaw-capture test and payload handoff at
//! grasp closure, which stand in for contact physics.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{AxisMode, AxisModes, Setpoint};
use crate::dynamics::{PayloadAttachment, RigidBodyState};
use crate::estimation::EstimateSnapshot;
use crate::perception::InstanceMap;
use crate::sensors::CameraModel;
use crate::world::{GripperGeometry, HarvestScene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    ArmMotors,
    TakeOff,
    Hover,
    DetectApples,
    SelectTarget,
    ReachTarget,
    Grasp,
    Delivery,
    Landing,
    Disarm,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::ArmMotors => "ArmMotors",
            Phase::TakeOff => "TakeOff",
            Phase::Hover => "Hover",
            Phase::DetectApples => "DetectApples",
            Phase::SelectTarget => "SelectTarget",
            Phase::ReachTarget => "ReachTarget",
            Phase::Grasp => "Grasp",
            Phase::Delivery => "Delivery",
            Phase::Landing => "Landing",
            Phase::Disarm => "Disarm",
        }
    }

    pub fn from_name(s: &str) -> Option<Phase> {
        Some(match s {
            "ArmMotors" => Phase::ArmMotors,
            "TakeOff" => Phase::TakeOff,
            "Hover" => Phase::Hover,
            "DetectApples" => Phase::DetectApples,
            "SelectTarget" => Phase::SelectTarget,
            "ReachTarget" => Phase::ReachTarget,
            "Grasp" => Phase::Grasp,
            "Delivery" => Phase::Delivery,
            "Landing" => Phase::Landing,
            "Disarm" => Phase::Disarm,
            _ => return None,
        })
    }

    pub fn airborne(&self) -> bool {
        matches!(
            self,
            Phase::TakeOff
                | Phase::Hover
                | Phase::DetectApples
                | Phase::SelectTarget
                | Phase::ReachTarget
                | Phase::Grasp
                | Phase::Delivery
                | Phase::Landing
        )
    }
}

/// The legal phase edges. Mission edges follow the grasp loop; the kill
/// switch and the safe-abort path add the edges into Hover and Landing.
pub const LEGAL_EDGES: &[(Phase, Phase)] = &[
    (Phase::ArmMotors, Phase::TakeOff),
    (Phase::ArmMotors, Phase::Disarm),
    (Phase::TakeOff, Phase::Hover),
    (Phase::TakeOff, Phase::Landing),
    (Phase::Hover, Phase::DetectApples),
    (Phase::Hover, Phase::Landing),
    (Phase::DetectApples, Phase::SelectTarget),
    (Phase::DetectApples, Phase::Landing),
    (Phase::SelectTarget, Phase::ReachTarget),
    (Phase::SelectTarget, Phase::Landing),
    (Phase::ReachTarget, Phase::Grasp),
    (Phase::ReachTarget, Phase::Hover),
    (Phase::ReachTarget, Phase::Landing),
    (Phase::Grasp, Phase::Delivery),
    (Phase::Grasp, Phase::Hover),
    (Phase::Grasp, Phase::Landing),
    (Phase::Delivery, Phase::Hover),
    (Phase::Delivery, Phase::Landing),
    (Phase::Landing, Phase::Disarm),
];

/// Checks a phase sequence against the legal edge set; returns the first
/// offending pair.
pub fn validate_phase_sequence(phases: &[Phase]) -> std::result::Result<(), (Phase, Phase)> {
    for w in phases.windows(2) {
        if w[0] != w[1] && !LEGAL_EDGES.contains(&(w[0], w[1])) {
            return Err((w[0], w[1]));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseTimeouts {
    pub takeoff: f64,
    pub hover: f64,
    pub detect: f64,
    pub reach: f64,
    pub grasp: f64,
    pub delivery: f64,
    pub landing: f64,
}

impl Default for PhaseTimeouts {
    fn default() -> Self {
        Self { takeoff: 10.0, hover: 10.0, detect: 5.0, reach: 30.0, grasp: 10.0, delivery: 15.0, landing: 20.0 }
    }
}

/// Mission section of the scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionConfig {
    pub hover_altitude: f64,
    /// Hover stability band, meters.
    pub hover_tolerance: f64,
    /// Time the band must hold before detection starts, seconds.
    pub hover_dwell: f64,
    /// Wrist-to-centroid distance that triggers the grasp, meters.
    pub grasp_tolerance: f64,
    pub approach_speed: f64,
    /// Within this wrist-to-target distance the approach slows down.
    pub slow_approach_range: f64,
    /// Speed divisor inside the slow zone.
    pub slow_speed_factor: f64,
    /// Commanded backward pull after closure, meters.
    pub backward_travel: f64,
    pub detect_dwell: f64,
    pub delivery_tolerance: f64,
    /// Observations an instance needs before it is selectable.
    pub select_min_obs: u32,
    /// Grasps closer than this fraction of the fruit radius count as full.
    pub full_grasp_factor: f64,
    /// Probability that a partial grasp drops before delivery.
    pub p_drop_partial: f64,
    /// Misses on one instance before selection gives up on it.
    pub max_attempts_per_instance: u32,
    /// Slew rate of the position setpoint on long moves (takeoff, return to
    /// hover, delivery), m/s. Keeps commanded accelerations gentle.
    pub nav_speed: f64,
    pub timeouts: PhaseTimeouts,
    /// Hover forever instead of advancing to detection (hover benches).
    pub hold_hover: bool,
    /// Servo to this standoff distance in front of the target and never
    /// grasp (servo bench).
    pub servo_standoff: Option<f64>,
    /// Freeze the target centroid at selection time (open-loop comparison).
    pub open_loop_servo: bool,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            hover_altitude: 1.0,
            hover_tolerance: 0.05,
            hover_dwell: 1.0,
            grasp_tolerance: 0.02,
            approach_speed: 0.35,
            slow_approach_range: 0.25,
            slow_speed_factor: 3.0,
            backward_travel: 0.20,
            detect_dwell: 0.7,
            delivery_tolerance: 0.08,
            select_min_obs: 3,
            full_grasp_factor: 0.5,
            p_drop_partial: 0.0,
            max_attempts_per_instance: 3,
            nav_speed: 0.6,
            timeouts: PhaseTimeouts::default(),
            hold_hover: false,
            servo_standoff: None,
            open_loop_servo: false,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.grasp_tolerance >= self.hover_tolerance {
            return Err(crate::SimError::Config(
                "grasp_tolerance must be tighter than hover_tolerance".into(),
            ));
        }
        if self.approach_speed <= 0.0 {
            return Err(crate::SimError::Config("approach_speed must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraspOutcome {
    FullGrasp,
    PartialGrasp,
    Miss,
    DroppedInTransit,
}

impl GraspOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            GraspOutcome::FullGrasp => "FullGrasp",
            GraspOutcome::PartialGrasp => "PartialGrasp",
            GraspOutcome::Miss => "Miss",
            GraspOutcome::DroppedInTransit => "DroppedInTransit",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "FullGrasp" => GraspOutcome::FullGrasp,
            "PartialGrasp" => GraspOutcome::PartialGrasp,
            "Miss" => GraspOutcome::Miss,
            "DroppedInTransit" => GraspOutcome::DroppedInTransit,
            _ => return None,
        })
    }
}

/// One selection-to-terminal-outcome record.
#[derive(Debug, Clone)]
pub struct GraspEvent {
    pub instance_id: u32,
    pub fruit_id: Option<u32>,
    pub t_selected: f64,
    pub t_grasped: Option<f64>,
    pub t_delivered: Option<f64>,
    pub outcome: Option<GraspOutcome>,
}

/// Classifies a closure by wrist-to-centroid distance: within
/// `full_factor * fruit_radius` is a full grasp, within the capture radius a
/// partial one, beyond it a miss.
pub fn classify_grasp(
    dist: f64,
    fruit_radius: f64,
    capture_radius: f64,
    full_factor: f64,
) -> Option<GraspOutcome> {
    if dist <= full_factor * fruit_radius {
        Some(GraspOutcome::FullGrasp)
    } else if dist <= capture_radius {
        Some(GraspOutcome::PartialGrasp)
    } else {
        None
    }
}

/// Servo setpoint toward a target centroid: x in velocity mode toward the
/// target (slowed inside the approach range), y/z position setpoints that
/// place the gripper wrist on the centroid, yaw facing the target. With a
/// standoff the wrist instead holds that distance in front of the target
/// and the x velocity is proportional, capped at the approach speed.
pub fn servo_setpoint(
    target: &Vector3<f64>,
    est: &EstimateSnapshot,
    arm_offset: &Vector3<f64>,
    cfg: &MissionConfig,
) -> (Setpoint, AxisModes) {
    let wrist_offset = est.rot * arm_offset;
    let wrist = est.p + wrist_offset;
    let yaw_des = (target.y - est.p.y).atan2(target.x - est.p.x);

    let aim = match cfg.servo_standoff {
        None => *target,
        Some(standoff) => {
            let mut los = target - wrist;
            los.z = 0.0;
            let los = if los.norm() < 1e-6 { Vector3::new(1.0, 0.0, 0.0) } else { los.normalize() };
            target - standoff * los
        }
    };

    let horiz_dist = ((aim.x - wrist.x).powi(2) + (aim.y - wrist.y).powi(2)).sqrt();
    let vx = match cfg.servo_standoff {
        None => {
            let speed = if horiz_dist < cfg.slow_approach_range {
                cfg.approach_speed / cfg.slow_speed_factor
            } else {
                cfg.approach_speed
            };
            speed * (aim.x - wrist.x).signum()
        }
        Some(_) => (1.5 * (aim.x - wrist.x)).clamp(-cfg.approach_speed, cfg.approach_speed),
    };

    let sp = Setpoint {
        p_des: Vector3::new(est.p.x, aim.y - wrist_offset.y, aim.z - wrist_offset.z),
        v_des: Vector3::new(vx, 0.0, 0.0),
        yaw_des,
    };
    (sp, AxisModes::SERVO)
}

#[derive(Debug, Clone)]
pub enum PayloadDirective {
    Keep,
    Attach(PayloadAttachment),
    Release,
}

/// Output of one executive tick.
#[derive(Debug, Clone)]
pub struct Directives {
    pub setpoint: Setpoint,
    pub modes: AxisModes,
    /// False while disarmed: the control loop is bypassed and thrust is cut.
    pub motors_on: bool,
    pub payload: PayloadDirective,
}

#[derive(Debug, Clone)]
pub struct TransitionRecord {
    pub t: f64,
    pub from: Phase,
    pub to: Phase,
}

#[derive(Debug, Clone)]
enum GraspStage {
    Closing { until: f64, hold: Vector3<f64>, yaw: f64 },
    Pulling { start: Vector3<f64>, heading: f64, hold: Vector3<f64>, yaw: f64 },
}

#[derive(Debug, Clone)]
struct GraspProgress {
    stage: GraspStage,
    fruit: Option<u32>,
    fruit_origin: Option<Vector3<f64>>,
    drop_scheduled: bool,
    delivery_start_dist: Option<f64>,
}

/// The mission executive.
#[derive(Debug, Clone)]
pub struct MissionExec {
    pub phase: Phase,
    pub cfg: MissionConfig,
    camera: CameraModel,
    gripper: GripperGeometry,
    hover_point: Vector3<f64>,
    takeoff_point: Vector3<f64>,
    delivery_point: Vector3<f64>,
    pub target: Option<u32>,
    pub events: Vec<GraspEvent>,
    pub transitions: Vec<TransitionRecord>,
    /// True from the "open early" command until the jaw closes on a target.
    pub jaw_open: bool,
    phase_entered: f64,
    stable_since: Option<f64>,
    abort_pending: bool,
    grasp: Option<GraspProgress>,
    frozen_centroid: Option<Vector3<f64>>,
    landing_hold: Vector3<f64>,
    arm_duration: f64,
    miss_counts: std::collections::BTreeMap<u32, u32>,
    nav_sp: Option<Vector3<f64>>,
    last_tick_t: f64,
}

impl MissionExec {
    pub fn new(cfg: MissionConfig, camera: CameraModel, scene: &HarvestScene) -> Self {
        let hover_point = Vector3::new(
            scene.takeoff_point.x,
            scene.takeoff_point.y,
            scene.takeoff_point.z + cfg.hover_altitude,
        );
        Self {
            phase: Phase::ArmMotors,
            cfg,
            camera,
            gripper: scene.gripper.clone(),
            hover_point,
            takeoff_point: scene.takeoff_point,
            delivery_point: scene.delivery_point,
            target: None,
            events: Vec::new(),
            transitions: Vec::new(),
            jaw_open: false,
            phase_entered: 0.0,
            stable_since: None,
            abort_pending: false,
            grasp: None,
            frozen_centroid: None,
            landing_hold: Vector3::zeros(),
            arm_duration: 0.5,
            miss_counts: std::collections::BTreeMap::new(),
            nav_sp: None,
            last_tick_t: 0.0,
        }
    }

    pub fn done(&self) -> bool {
        self.phase == Phase::Disarm
    }

    fn goto(&mut self, to: Phase, t: f64) {
        debug_assert!(
            LEGAL_EDGES.contains(&(self.phase, to)),
            "illegal edge {:?} -> {:?}",
            self.phase,
            to
        );
        self.transitions.push(TransitionRecord { t, from: self.phase, to });
        self.phase = to;
        self.phase_entered = t;
        self.stable_since = None;
        self.nav_sp = None;
    }

    /// Position setpoint slewed toward `goal` at the nav speed, starting
    /// from the estimate at phase entry.
    fn slewed_setpoint(&mut self, goal: Vector3<f64>, est: &EstimateSnapshot, dt: f64) -> Vector3<f64> {
        let current = self.nav_sp.unwrap_or(est.p);
        let to_goal = goal - current;
        let step = self.cfg.nav_speed * dt;
        let next = if to_goal.norm() <= step { goal } else { current + to_goal.normalize() * step };
        self.nav_sp = Some(next);
        next
    }

    fn timeout(&self, t: f64, limit: f64) -> bool {
        t - self.phase_entered > limit
    }

    fn current_event(&mut self) -> &mut GraspEvent {
        self.events.last_mut().expect("a selection opened an event")
    }

    fn finish_event(&mut self, outcome: GraspOutcome) {
        if outcome == GraspOutcome::Miss {
            if let Some(id) = self.target {
                *self.miss_counts.entry(id).or_insert(0) += 1;
            }
        }
        let ev = self.current_event();
        ev.outcome = Some(outcome);
    }

    fn hover_slew(&mut self, est: &EstimateSnapshot, dt: f64) -> (Setpoint, AxisModes) {
        let sp = self.slewed_setpoint(self.hover_point, est, dt);
        (Setpoint::hold(sp, 0.0), AxisModes::ALL_POSITION)
    }

    fn enter_landing(&mut self, est: &EstimateSnapshot, t: f64) {
        self.landing_hold = est.p;
        self.goto(Phase::Landing, t);
    }

    /// Runs one 100 Hz autonomy tick.
    #[allow(clippy::too_many_arguments)]
    pub fn tick(
        &mut self,
        t: f64,
        est: &EstimateSnapshot,
        truth: &RigidBodyState,
        kill: bool,
        map: &mut InstanceMap,
        scene: &mut HarvestScene,
        rng: &mut ChaCha8Rng,
    ) -> Directives {
        let mut payload = PayloadDirective::Keep;
        let dt = (t - self.last_tick_t).max(0.0);
        self.last_tick_t = t;

        if kill && self.phase.airborne() && self.phase != Phase::Landing {
            self.enter_landing(est, t);
        } else if kill && self.phase == Phase::ArmMotors {
            self.goto(Phase::Disarm, t);
        }

        let (setpoint, modes, motors_on) = match self.phase {
            Phase::ArmMotors => {
                if t - self.phase_entered >= self.arm_duration {
                    self.goto(Phase::TakeOff, t);
                }
                (Setpoint::hold(self.takeoff_point, 0.0), AxisModes::ALL_POSITION, true)
            }
            Phase::TakeOff => {
                if (est.p - self.hover_point).norm() < self.cfg.hover_tolerance {
                    self.goto(Phase::Hover, t);
                } else if self.cfg.hold_hover && t - self.phase_entered > 5.0 {
                    // benches measure the steady-state offset itself, so they
                    // enter Hover on a clock instead of the tolerance gate
                    self.goto(Phase::Hover, t);
                } else if self.timeout(t, self.cfg.timeouts.takeoff) {
                    self.enter_landing(est, t);
                }
                let (sp, m) = self.hover_slew(est, dt);
                (sp, m, true)
            }
            Phase::Hover => {
                let err = (est.p - self.hover_point).norm();
                if err < self.cfg.hover_tolerance {
                    if self.stable_since.is_none() {
                        self.stable_since = Some(t);
                    }
                } else {
                    self.stable_since = None;
                }
                let stable =
                    self.stable_since.map(|s| t - s >= self.cfg.hover_dwell).unwrap_or(false);

                if self.abort_pending && (stable || self.timeout(t, self.cfg.timeouts.hover)) {
                    self.enter_landing(est, t);
                } else if !self.cfg.hold_hover && stable {
                    self.goto(Phase::DetectApples, t);
                } else if !self.cfg.hold_hover
                    && !self.abort_pending
                    && self.timeout(t, self.cfg.timeouts.hover)
                {
                    // never stabilized; give up safely
                    self.enter_landing(est, t);
                }
                let (sp, m) = self.hover_slew(est, dt);
                (sp, m, true)
            }
            Phase::DetectApples => {
                if t - self.phase_entered >= self.cfg.detect_dwell
                    || self.timeout(t, self.cfg.timeouts.detect)
                {
                    self.goto(Phase::SelectTarget, t);
                }
                let (sp, m) = self.hover_slew(est, dt);
                (sp, m, true)
            }
            Phase::SelectTarget => {
                let exhausted: Vec<u32> = self
                    .miss_counts
                    .iter()
                    .filter(|(_, &c)| c >= self.cfg.max_attempts_per_instance)
                    .map(|(&id, _)| id)
                    .collect();
                match map.select_target_excluding(
                    &est.p,
                    &est.rot,
                    &self.camera,
                    self.cfg.select_min_obs,
                    &exhausted,
                ) {
                    Some(id) => {
                        self.target = Some(id);
                        self.frozen_centroid = map.query_target(id).ok();
                        self.jaw_open = true; // opened early, before servoing
                        self.events.push(GraspEvent {
                            instance_id: id,
                            fruit_id: None,
                            t_selected: t,
                            t_grasped: None,
                            t_delivered: None,
                            outcome: None,
                        });
                        self.goto(Phase::ReachTarget, t);
                    }
                    None => {
                        self.enter_landing(est, t);
                    }
                }
                let (sp, m) = self.hover_slew(est, dt);
                (sp, m, true)
            }
            Phase::ReachTarget => {
                // the jaw opens at selection, before the first servo setpoint
                debug_assert!(self.jaw_open || self.cfg.servo_standoff.is_some());
                let centroid = if self.cfg.open_loop_servo {
                    self.frozen_centroid
                } else {
                    self.target.and_then(|id| map.query_target(id).ok())
                };
                match centroid {
                    None => {
                        // target vanished mid-servo
                        self.finish_event(GraspOutcome::Miss);
                        self.target = None;
                        self.goto(Phase::Hover, t);
                        let (sp, m) = self.hover_slew(est, dt);
                        (sp, m, true)
                    }
                    Some(c) => {
                        let (sp, m) =
                            servo_setpoint(&c, est, &self.gripper.arm_offset_vec(), &self.cfg);
                        let wrist = est.p + est.rot * self.gripper.arm_offset_vec();
                        let dist = (wrist - c).norm();
                        let overshoot = {
                            let mut los = c - self.hover_point;
                            los.z = 0.0;
                            let los =
                                if los.norm() < 1e-6 { Vector3::x() } else { los.normalize() };
                            (wrist - c).dot(&los) > 0.10
                        };
                        if self.cfg.servo_standoff.is_none() && dist <= self.cfg.grasp_tolerance {
                            self.jaw_open = false;
                            self.grasp = Some(GraspProgress {
                                stage: GraspStage::Closing {
                                    until: t + self.gripper.jaw_close_time,
                                    hold: est.p,
                                    yaw: sp.yaw_des,
                                },
                                fruit: None,
                                fruit_origin: None,
                                drop_scheduled: false,
                                delivery_start_dist: None,
                            });
                            self.goto(Phase::Grasp, t);
                        } else if overshoot || self.timeout(t, self.cfg.timeouts.reach) {
                            // flew past or ran out of time: no grasp trial
                            self.events.pop();
                            self.target = None;
                            self.abort_pending = self.timeout(t, self.cfg.timeouts.reach);
                            self.goto(Phase::Hover, t);
                        }
                        (sp, m, true)
                    }
                }
            }
            Phase::Grasp => {
                let mut sp = Setpoint::hold(est.p, 0.0);
                let mut modes = AxisModes::ALL_POSITION;
                let progress = self.grasp.clone();
                match progress {
                    None => {
                        self.goto(Phase::Hover, t);
                    }
                    Some(mut g) => {
                        match g.stage {
                            GraspStage::Closing { until, hold, yaw } => {
                                sp = Setpoint::hold(hold, yaw);
                                if t >= until {
                                    // jaw fully closed: capture test against truth
                                    let wrist_true =
                                        truth.p + truth.rot * self.gripper.arm_offset_vec();
                                    let caught = scene
                                        .attached_fruits()
                                        .map(|f| ((f.position - wrist_true).norm(), f.id, f.radius, f.position))
                                        .filter(|(d, _, _, _)| *d <= self.gripper.jaw_open_radius)
                                        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                                    match caught {
                                        None => {
                                            self.jaw_open = true;
                                            self.grasp = None;
                                            self.finish_event(GraspOutcome::Miss);
                                            self.target = None;
                                            self.goto(Phase::Hover, t);
                                        }
                                        Some((dist, fid, radius, origin)) => {
                                            let outcome = classify_grasp(
                                                dist,
                                                radius,
                                                self.gripper.jaw_open_radius,
                                                self.cfg.full_grasp_factor,
                                            )
                                            .expect("within capture radius");
                                            scene.grip(fid).expect("fruit attached");
                                            let drop_draw = rng.gen::<f64>();
                                            g.drop_scheduled = outcome
                                                == GraspOutcome::PartialGrasp
                                                && drop_draw < self.cfg.p_drop_partial;
                                            g.fruit = Some(fid);
                                            g.fruit_origin = Some(origin);
                                            g.stage = GraspStage::Pulling {
                                                start: est.p,
                                                heading: yaw,
                                                hold,
                                                yaw,
                                            };
                                            {
                                                let ev = self.current_event();
                                                ev.fruit_id = Some(fid);
                                                ev.t_grasped = Some(t);
                                                ev.outcome = Some(outcome);
                                            }
                                            self.grasp = Some(g);
                                        }
                                    }
                                } else {
                                    self.grasp = Some(g);
                                }
                            }
                            GraspStage::Pulling { start, heading, hold, yaw } => {
                                let dir = Vector3::new(heading.cos(), heading.sin(), 0.0);
                                let travel = (start - est.p).dot(&dir);
                                sp = Setpoint {
                                    p_des: Vector3::new(est.p.x, hold.y, hold.z),
                                    v_des: Vector3::new(
                                        -self.cfg.approach_speed * heading.cos(),
                                        0.0,
                                        0.0,
                                    ),
                                    yaw_des: yaw,
                                };
                                modes = AxisModes::SERVO;
                                if travel >= self.cfg.backward_travel {
                                    let fid = g.fruit.expect("gripped fruit");
                                    let detached = scene
                                        .detach_fruit(fid, travel)
                                        .expect("gripped and attached");
                                    if detached {
                                        let fruit_mass = scene.fruit(fid).expect("exists").mass;
                                        payload = PayloadDirective::Attach(PayloadAttachment {
                                            mass: fruit_mass,
                                            offset: self.gripper.arm_offset_vec(),
                                        });
                                        g.delivery_start_dist =
                                            Some((est.p - self.delivery_point).norm());
                                        g.stage = GraspStage::Pulling { start, heading, hold, yaw };
                                        self.grasp = Some(g);
                                        self.goto(Phase::Delivery, t);
                                    } else {
                                        // stem held on: give up this attempt
                                        scene.release_grip();
                                        self.jaw_open = true;
                                        self.grasp = None;
                                        self.finish_event(GraspOutcome::Miss);
                                        self.target = None;
                                        self.goto(Phase::Hover, t);
                                    }
                                } else {
                                    self.grasp = Some(g);
                                }
                            }
                        }
                        if self.phase == Phase::Grasp && self.timeout(t, self.cfg.timeouts.grasp) {
                            if scene.gripped_fruit().is_some() {
                                scene.release_grip();
                            }
                            self.jaw_open = true;
                            self.grasp = None;
                            if self.events.last().map(|e| e.outcome.is_none()).unwrap_or(false) {
                                self.finish_event(GraspOutcome::Miss);
                            }
                            self.target = None;
                            self.abort_pending = true;
                            self.goto(Phase::Hover, t);
                        }
                    }
                }
                (sp, modes, true)
            }
            Phase::Delivery => {
                let glide = self.slewed_setpoint(self.delivery_point, est, dt);
                let sp = Setpoint::hold(glide, 0.0);
                let dist = (est.p - self.delivery_point).norm();

                let drop_now = self
                    .grasp
                    .as_ref()
                    .map(|g| {
                        g.drop_scheduled
                            && g.delivery_start_dist
                                .map(|d0| dist < d0 / 2.0)
                                .unwrap_or(false)
                    })
                    .unwrap_or(false);

                if drop_now {
                    let wrist_true = truth.p + truth.rot * self.gripper.arm_offset_vec();
                    scene.place_gripped(wrist_true).expect("payload gripped");
                    payload = PayloadDirective::Release;
                    self.jaw_open = true;
                    self.remove_grasped_instances(map);
                    self.finish_event(GraspOutcome::DroppedInTransit);
                    self.grasp = None;
                    self.target = None;
                    self.goto(Phase::Hover, t);
                } else if dist <= self.cfg.delivery_tolerance {
                    let wrist_true = truth.p + truth.rot * self.gripper.arm_offset_vec();
                    scene.place_gripped(wrist_true).expect("payload gripped");
                    payload = PayloadDirective::Release;
                    self.jaw_open = true;
                    self.remove_grasped_instances(map);
                    {
                        let ev = self.current_event();
                        ev.t_delivered = Some(t);
                    }
                    self.grasp = None;
                    self.target = None;
                    self.goto(Phase::Hover, t);
                } else if self.timeout(t, self.cfg.timeouts.delivery) {
                    let wrist_true = truth.p + truth.rot * self.gripper.arm_offset_vec();
                    scene.place_gripped(wrist_true).expect("payload gripped");
                    payload = PayloadDirective::Release;
                    self.jaw_open = true;
                    self.remove_grasped_instances(map);
                    self.finish_event(GraspOutcome::DroppedInTransit);
                    self.grasp = None;
                    self.target = None;
                    self.abort_pending = true;
                    self.goto(Phase::Hover, t);
                }
                (sp, AxisModes::ALL_POSITION, true)
            }
            Phase::Landing => {
                if est.p.z < 0.08 || self.timeout(t, self.cfg.timeouts.landing) {
                    self.goto(Phase::Disarm, t);
                }
                let sp = Setpoint {
                    p_des: Vector3::new(self.landing_hold.x, self.landing_hold.y, 0.0),
                    v_des: Vector3::new(0.0, 0.0, -0.4),
                    yaw_des: 0.0,
                };
                let modes =
                    AxisModes { x: AxisMode::Position, y: AxisMode::Position, z: AxisMode::Velocity };
                (sp, modes, true)
            }
            Phase::Disarm => (Setpoint::hold(est.p, 0.0), AxisModes::ALL_POSITION, false),
        };

        Directives { setpoint, modes, motors_on, payload }
    }

    /// Marks the intended target and, if a different fruit ended up in the
    /// jaw, the instance nearest its original position.
    fn remove_grasped_instances(&mut self, map: &mut InstanceMap) {
        if let Some(id) = self.target {
            let _ = map.mark_removed(id);
        }
        if let Some(origin) = self.grasp.as_ref().and_then(|g| g.fruit_origin) {
            if let Some(other) = map.nearest_live(&origin) {
                let _ = map.mark_removed(other);
            }
        }
    }
}
