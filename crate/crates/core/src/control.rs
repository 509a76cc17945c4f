//! The vehicle control stack.
//!
//! A per-axis outer loop turns position or velocity setpoints into a desired
//! world-frame acceleration. Two thrust laws turn that into a thrust vector:
//!
//! - the thrust-microstepping accelerometer-feedback law, which increments
//!   the previous thrust vector by a PD term on the acceleration error and
//!   therefore needs no mass or gravity knowledge anywhere, and
//! - the direct-acceleration baseline `f = m a* + m g - f_e`, whose accuracy
//!   stands and falls with the assumed mass and thrust model.
//!
//! The thrust vector is then converted into {thrust, roll, pitch, yaw} for
//! the attitude inner loop by a geometric construction of the desired body
//! axes. The loop runs at 100 Hz.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::ControlCommand;
use crate::error::{Result, SimError};
use crate::estimation::EstimateSnapshot;

/// Control loop rate, Hz.
pub const CONTROL_RATE_HZ: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisMode {
    Position,
    Velocity,
}

/// Per-axis control mode. Any combination is valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisModes {
    pub x: AxisMode,
    pub y: AxisMode,
    pub z: AxisMode,
}

impl AxisModes {
    pub const ALL_POSITION: AxisModes =
        AxisModes { x: AxisMode::Position, y: AxisMode::Position, z: AxisMode::Position };
    /// The visual-servoing combination: velocity on x (front), position on
    /// y (side) and z (vertical).
    pub const SERVO: AxisModes =
        AxisModes { x: AxisMode::Velocity, y: AxisMode::Position, z: AxisMode::Position };

    fn get(&self, axis: usize) -> AxisMode {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// Desired values for the outer loop. Position axes read `p_des`, velocity
/// axes read `v_des`.
#[derive(Debug, Clone, Copy)]
pub struct Setpoint {
    pub p_des: Vector3<f64>,
    pub v_des: Vector3<f64>,
    pub yaw_des: f64,
}

impl Setpoint {
    pub fn hold(p: Vector3<f64>, yaw: f64) -> Self {
        Self { p_des: p, v_des: Vector3::zeros(), yaw_des: yaw }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterLoopGains {
    pub kp_pos: f64,
    pub kd_pos: f64,
    pub kp_vel: f64,
    /// Norm clamp on the desired acceleration, m/s^2.
    pub a_max: f64,
    /// Estimates older than this hold the previous output, seconds.
    pub max_estimate_age: f64,
}

impl Default for OuterLoopGains {
    fn default() -> Self {
        Self { kp_pos: 9.0, kd_pos: 6.0, kp_vel: 3.0, a_max: 4.0, max_estimate_age: 0.05 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OuterLoopState {
    pub last_a_star: Vector3<f64>,
    pub stale: bool,
}

/// Per-axis position/velocity law producing the desired acceleration, with a
/// norm clamp. A stale estimate freezes the output and raises the flag.
pub fn desired_acceleration(
    est: &EstimateSnapshot,
    now: f64,
    sp: &Setpoint,
    modes: &AxisModes,
    gains: &OuterLoopGains,
    state: &mut OuterLoopState,
) -> Vector3<f64> {
    if now - est.t > gains.max_estimate_age {
        state.stale = true;
        return state.last_a_star;
    }
    state.stale = false;
    let mut a = Vector3::zeros();
    for axis in 0..3 {
        a[axis] = match modes.get(axis) {
            AxisMode::Position => {
                gains.kp_pos * (sp.p_des[axis] - est.p[axis]) + gains.kd_pos * (0.0 - est.v[axis])
            }
            AxisMode::Velocity => gains.kp_vel * (sp.v_des[axis] - est.v[axis]),
        };
    }
    let n = a.norm();
    if n > gains.a_max {
        a *= gains.a_max / n;
    }
    state.last_a_star = a;
    a
}

/// Memory of the thrust-microstepping controller.
#[derive(Debug, Clone)]
pub struct ThrustControllerState {
    pub alpha: f64,
    pub beta: f64,
    /// Low-pass cutoff for the error derivative, Hz.
    pub lpf_cutoff_hz: f64,
    pub prev_e_a: Vector3<f64>,
    pub e_dot_filtered: Vector3<f64>,
    pub prev_f_star: Vector3<f64>,
    pub initialized: bool,
}

impl ThrustControllerState {
    /// Fresh controller; the first step seeds the previous thrust with the
    /// hover seed `f0` (no mass knowledge, default 0: the integrator winds
    /// up during takeoff).
    pub fn new(alpha: f64, beta: f64, f0: f64) -> Self {
        Self {
            alpha,
            beta,
            lpf_cutoff_hz: 20.0,
            prev_e_a: Vector3::zeros(),
            e_dot_filtered: Vector3::zeros(),
            prev_f_star: Vector3::new(0.0, 0.0, f0),
            initialized: false,
        }
    }
}

/// The incremental thrust law:`f* = alpha e_a + beta e_a_dot + f*_prev`.
/// Exposed separately so the fixed-point and substitution behavior is
/// testable without the derivative filter.
pub fn thrust_law(alpha: f64, beta: f64, e_a: &Vector3<f64>, e_a_dot: &Vector3<f64>, prev_f: &Vector3<f64>) -> Vector3<f64> {
    alpha * e_a + beta * e_a_dot + prev_f
}

/// One 100 Hz step of the thrust-microstepping controller. `a_meas` is the
/// world-frame acceleration derived from the accelerometer; neither mass nor
/// gravity enters the law. The z component of the output is clamped to
/// [0, max_thrust] and the clamped vector becomes the next step's memory.
pub fn tmaf_thrust(
    a_star: &Vector3<f64>,
    a_meas: &Vector3<f64>,
    ctrl: &mut ThrustControllerState,
    max_thrust: f64,
    dt: f64,
) -> Result<Vector3<f64>> {
    if dt <= 0.0 {
        return Err(SimError::Config(format!("tmaf dt {dt} must be > 0")));
    }
    let e_a = a_star - a_meas;
    if !ctrl.initialized {
        ctrl.prev_e_a = e_a;
        ctrl.e_dot_filtered = Vector3::zeros();
        ctrl.initialized = true;
    }
    let e_dot_raw = (e_a - ctrl.prev_e_a) / dt;
    let tau = 1.0 / (2.0 * std::f64::consts::PI * ctrl.lpf_cutoff_hz);
    let lambda = dt / (dt + tau);
    ctrl.e_dot_filtered += lambda * (e_dot_raw - ctrl.e_dot_filtered);

    let mut f_star = thrust_law(ctrl.alpha, ctrl.beta, &e_a, &ctrl.e_dot_filtered, &ctrl.prev_f_star);
    f_star.z = f_star.z.clamp(0.0, max_thrust);
    // lateral anti-windup: the integrator must not accumulate beyond what
    // the vehicle could ever produce
    let lateral = (f_star.x * f_star.x + f_star.y * f_star.y).sqrt();
    if lateral > max_thrust {
        f_star.x *= max_thrust / lateral;
        f_star.y *= max_thrust / lateral;
    }

    ctrl.prev_e_a = e_a;
    ctrl.prev_f_star = f_star;
    Ok(f_star)
}

/// Direct-acceleration baseline `f = m a* + m g z - f_e`. Its weakness is
/// exactly the dependence on the assumed mass and disturbance estimate.
pub fn da_thrust(a_star: &Vector3<f64>, mass: f64, g: f64, f_e_est: &Vector3<f64>) -> Vector3<f64> {
    mass * a_star + Vector3::new(0.0, 0.0, mass * g) - f_e_est
}

/// Converts the thrust vector and desired yaw into an attitude command.
///
/// The desired body z axis is the thrust direction; the desired body x axis
/// comes from the yaw heading projected orthogonal to it. The scalar thrust
/// is the projection of the thrust vector onto the *current* body z, which
/// avoids over-thrust during attitude transients. Returns the command and a
/// degeneracy flag; on degeneracy (near-zero thrust or thrust parallel to
/// the heading) the previous command is held with updated thrust.
pub fn thrust_to_attitude(
    f_star: &Vector3<f64>,
    yaw_des: f64,
    rot_current: &Matrix3<f64>,
    prev: &ControlCommand,
) -> (ControlCommand, bool) {
    let scalar_thrust = f_star.dot(&(rot_current * Vector3::z())).max(0.0);
    let norm = f_star.norm();
    if norm < 0.1 {
        return (ControlCommand { thrust: scalar_thrust, ..*prev }, true);
    }
    let b3 = f_star / norm;
    let heading = Vector3::new(yaw_des.cos(), yaw_des.sin(), 0.0);
    let b2_raw = b3.cross(&heading);
    if b2_raw.norm() < 1e-6 {
        return (ControlCommand { thrust: scalar_thrust, ..*prev }, true);
    }
    let b2 = b2_raw.normalize();
    let b1 = b2.cross(&b3);
    let r_des = Matrix3::from_columns(&[b1, b2, b3]);
    let (roll, pitch, yaw) = nalgebra::Rotation3::from_matrix_unchecked(r_des).euler_angles();
    (ControlCommand { thrust: scalar_thrust, roll, pitch, yaw }, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Tmaf,
    Da,
}

/// Control section of the scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub kind: ControllerKind,
    pub alpha: f64,
    pub beta: f64,
    /// Hover thrust seed at arm time, newtons.
    pub f0: f64,
    /// Mass the direct-acceleration baseline believes, kg. Defaults to the
    /// vehicle's true mass.
    pub assumed_mass: Option<f64>,
    pub outer: OuterLoopGains,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Tmaf,
            alpha: 0.8,
            beta: 0.02,
            f0: 0.0,
            assumed_mass: None,
            outer: OuterLoopGains::default(),
        }
    }
}

/// All mutable controller memory, owned by the control loop.
#[derive(Debug, Clone)]
pub struct ControllerStates {
    pub outer: OuterLoopState,
    pub thrust: ThrustControllerState,
    pub last_cmd: ControlCommand,
    pub degenerate_count: u32,
}

impl ControllerStates {
    pub fn new(cfg: &ControlConfig) -> Self {
        Self {
            outer: OuterLoopState::default(),
            thrust: ThrustControllerState::new(cfg.alpha, cfg.beta, cfg.f0),
            last_cmd: ControlCommand::zero(),
            degenerate_count: 0,
        }
    }
}

/// One full control step: outer loop, thrust law, attitude extraction.
#[allow(clippy::too_many_arguments)]
pub fn control_step(
    est: &EstimateSnapshot,
    now: f64,
    sp: &Setpoint,
    modes: &AxisModes,
    cfg: &ControlConfig,
    vehicle_mass: f64,
    g: f64,
    max_thrust: f64,
    states: &mut ControllerStates,
    dt: f64,
) -> Result<ControlCommand> {
    let a_star = desired_acceleration(est, now, sp, modes, &cfg.outer, &mut states.outer);
    let f_star = match cfg.kind {
        ControllerKind::Tmaf => tmaf_thrust(&a_star, &est.a_world, &mut states.thrust, max_thrust, dt)?,
        ControllerKind::Da => {
            let m = cfg.assumed_mass.unwrap_or(vehicle_mass);
            da_thrust(&a_star, m, g, &Vector3::zeros())
        }
    };
    let (cmd, degenerate) = thrust_to_attitude(&f_star, sp.yaw_des, &est.rot, &states.last_cmd);
    if degenerate {
        states.degenerate_count += 1;
    }
    let cmd = cmd.clamped(max_thrust);
    states.last_cmd = cmd;
    Ok(cmd)
}
