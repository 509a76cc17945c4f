//! Rigid-body vehicle dynamics.
//!
//! Integrates translational and rotational motion with RK4 at a fixed 1 ms
//! step. Thrust acts along body z scaled by a battery-dependent
//! effectiveness factor; the attitude command is turned into body torque by
//! a PD inner loop standing in for the flight controller's attitude loop.
//! An optional off-center payload contributes mass, a parallel-axis inertia
//! term and a gravity torque about the vehicle center.
//!
//! Frames follow the Front-Left-Up convention: world and body x point
//! forward, y left, z up. `rot` maps body to world.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Physics integration step, seconds.
pub const PHYSICS_DT: f64 = 0.001;

/// Vehicle pose and velocity.
#[derive(Debug, Clone)]
pub struct RigidBodyState {
    /// World-frame position, meters.
    pub p: Vector3<f64>,
    /// World-frame velocity, m/s.
    pub v: Vector3<f64>,
    /// Body-to-world rotation.
    pub rot: Matrix3<f64>,
    /// Body-frame angular velocity, rad/s.
    pub omega: Vector3<f64>,
    pub t: f64,
}

impl RigidBodyState {
    pub fn at_rest(p: Vector3<f64>) -> Self {
        Self { p, v: Vector3::zeros(), rot: Matrix3::identity(), omega: Vector3::zeros(), t: 0.0 }
    }

    /// (roll, pitch, yaw) of the current attitude, radians.
    pub fn euler_angles(&self) -> (f64, f64, f64) {
        nalgebra::Rotation3::from_matrix_unchecked(self.rot).euler_angles()
    }
}

/// PD gains of the attitude inner loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttitudeGains {
    pub kp: f64,
    pub kd: f64,
    /// Per-axis torque clamp, N·m.
    pub torque_limit: f64,
}

impl Default for AttitudeGains {
    fn default() -> Self {
        // stiff enough that the attitude loop stays well above the thrust
        // controller's crossover even with the payload's parallel-axis
        // inertia attached
        Self { kp: 400.0, kd: 13.0, torque_limit: 40.0 }
    }
}

/// Physical vehicle parameters.
#[derive(Debug, Clone)]
pub struct VehicleParams {
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    pub g: f64,
    pub max_thrust: f64,
    /// Fraction of commanded thrust actually produced, (0, 1].
    pub thrust_effectiveness: f64,
    pub attitude: AttitudeGains,
    pub linear_drag: f64,
}

/// Vehicle section of the scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleConfig {
    pub mass: f64,
    pub inertia_diag: [f64; 3],
    pub g: f64,
    pub max_thrust: f64,
    pub attitude: AttitudeGains,
    pub linear_drag: f64,
    pub battery: Option<BatteryConfig>,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            mass: 3.4,
            inertia_diag: [0.045, 0.045, 0.08],
            g: 9.81,
            max_thrust: 100.0,
            attitude: AttitudeGains::default(),
            linear_drag: 0.0,
            battery: None,
        }
    }
}

impl VehicleConfig {
    pub fn params(&self) -> Result<VehicleParams> {
        let [ix, iy, iz] = self.inertia_diag;
        if ix <= 0.0 || iy <= 0.0 || iz <= 0.0 {
            return Err(SimError::Config("inertia diagonal must be positive".into()));
        }
        if self.max_thrust < self.mass * self.g * 1.4 {
            return Err(SimError::Config(format!(
                "max_thrust {} below 1.4x hover weight {}",
                self.max_thrust,
                self.mass * self.g * 1.4
            )));
        }
        Ok(VehicleParams {
            mass: self.mass,
            inertia: Matrix3::from_diagonal(&Vector3::new(ix, iy, iz)),
            g: self.g,
            max_thrust: self.max_thrust,
            thrust_effectiveness: 1.0,
            attitude: self.attitude.clone(),
            linear_drag: self.linear_drag,
        })
    }
}

/// Linear decay of thrust effectiveness from 1.0 to `floor` over `horizon`
/// seconds, holding the floor afterwards.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    pub floor: f64,
    pub horizon: f64,
}

/// Builds the effectiveness schedule. Errors on a non-positive floor.
pub fn set_battery_decay(floor: f64, horizon: f64) -> Result<BatteryConfig> {
    if floor <= 0.0 || floor > 1.0 {
        return Err(SimError::Config(format!("battery floor {floor} outside (0, 1]")));
    }
    Ok(BatteryConfig { floor, horizon })
}

impl BatteryConfig {
    pub fn effectiveness(&self, t: f64) -> f64 {
        if self.horizon <= 0.0 {
            return self.floor;
        }
        (1.0 - (1.0 - self.floor) * (t / self.horizon)).max(self.floor)
    }
}

/// The {thrust, roll, pitch, yaw} tuple sent to the attitude inner loop.
#[derive(Debug, Clone, Copy)]
pub struct ControlCommand {
    /// Scalar thrust along body z, newtons.
    pub thrust: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

/// Roll/pitch command clamp, radians.
pub const ATTITUDE_CMD_LIMIT: f64 = std::f64::consts::FRAC_PI_4;

impl ControlCommand {
    pub fn zero() -> Self {
        Self { thrust: 0.0, roll: 0.0, pitch: 0.0, yaw: 0.0 }
    }

    /// Applies the command clamps: thrust in [0, max_thrust], roll/pitch in
    /// [-pi/4, pi/4].
    pub fn clamped(mut self, max_thrust: f64) -> Self {
        self.thrust = self.thrust.clamp(0.0, max_thrust);
        self.roll = self.roll.clamp(-ATTITUDE_CMD_LIMIT, ATTITUDE_CMD_LIMIT);
        self.pitch = self.pitch.clamp(-ATTITUDE_CMD_LIMIT, ATTITUDE_CMD_LIMIT);
        self
    }

    pub fn desired_rotation(&self) -> Matrix3<f64> {
        *nalgebra::Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw).matrix()
    }
}

/// Grasped fruit riding on the gripper arm.
#[derive(Debug, Clone)]
pub struct PayloadAttachment {
    pub mass: f64,
    /// Body-frame offset of the payload from the vehicle center, meters.
    pub offset: Vector3<f64>,
}

/// Skew-symmetric matrix S(v) with S(v)·w = v × w.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// PD torque on the rotation error between the current attitude and the
/// commanded one, with angular-rate damping. Body frame, clamped per axis.
pub fn attitude_inner_loop(
    state: &RigidBodyState,
    cmd: &ControlCommand,
    params: &VehicleParams,
) -> Vector3<f64> {
    let r = &state.rot;
    let rd = cmd.desired_rotation();
    let err = r.transpose() * rd - rd.transpose() * r;
    // vee of the skew part; points from the current attitude toward the command
    let e = 0.5 * Vector3::new(err.m32, err.m13, err.m21);
    let lim = params.attitude.torque_limit;
    (params.attitude.kp * e - params.attitude.kd * state.omega).map(|x| x.clamp(-lim, lim))
}

/// Combined mass and inertia with the payload's parallel-axis contribution.
pub fn effective_inertia(
    params: &VehicleParams,
    payload: Option<&PayloadAttachment>,
) -> (f64, Matrix3<f64>) {
    match payload {
        None => (params.mass, params.inertia),
        Some(p) => {
            let o = p.offset;
            let shift = p.mass * (o.norm_squared() * Matrix3::identity() - o * o.transpose());
            (params.mass + p.mass, params.inertia + shift)
        }
    }
}

/// World-frame acceleration for the given state and inputs. Also what an
/// ideal accelerometer would report (plus gravity, rotated to body).
pub fn acceleration(
    rot: &Matrix3<f64>,
    v: &Vector3<f64>,
    cmd_thrust: f64,
    params: &VehicleParams,
    payload: Option<&PayloadAttachment>,
    f_e: &Vector3<f64>,
) -> Vector3<f64> {
    let (m_total, _) = effective_inertia(params, payload);
    let thrust_world = params.thrust_effectiveness * cmd_thrust * (rot * Vector3::z());
    (thrust_world + f_e - params.linear_drag * v) / m_total - Vector3::new(0.0, 0.0, params.g)
}

/// Gravity torque of the off-center payload about the vehicle center,
/// body frame.
pub fn payload_torque(
    rot: &Matrix3<f64>,
    params: &VehicleParams,
    payload: Option<&PayloadAttachment>,
) -> Vector3<f64> {
    match payload {
        None => Vector3::zeros(),
        Some(p) => {
            let weight_world = Vector3::new(0.0, 0.0, -p.mass * params.g);
            p.offset.cross(&(rot.transpose() * weight_world))
        }
    }
}

struct Derivative {
    dp: Vector3<f64>,
    dv: Vector3<f64>,
    drot: Matrix3<f64>,
    domega: Vector3<f64>,
}

fn derivative(
    p_state: (&Vector3<f64>, &Vector3<f64>, &Matrix3<f64>, &Vector3<f64>),
    cmd: &ControlCommand,
    params: &VehicleParams,
    payload: Option<&PayloadAttachment>,
    f_e: &Vector3<f64>,
) -> Derivative {
    let (_, v, rot, omega) = p_state;
    let (_, j_total) = effective_inertia(params, payload);
    let tmp = RigidBodyState { p: Vector3::zeros(), v: *v, rot: *rot, omega: *omega, t: 0.0 };
    let torque = attitude_inner_loop(&tmp, cmd, params) + payload_torque(rot, params, payload);
    let j_inv = j_total.try_inverse().expect("inertia is invertible");
    Derivative {
        dp: *v,
        dv: acceleration(rot, v, cmd.thrust, params, payload, f_e),
        drot: rot * skew(omega),
        domega: j_inv * (-omega.cross(&(j_total * omega)) + torque),
    }
}

/// Gram-Schmidt column orthonormalization.
fn orthonormalize(rot: &Matrix3<f64>) -> Matrix3<f64> {
    let c1 = rot.column(0).into_owned();
    let c2 = rot.column(1).into_owned();
    let b1 = c1.normalize();
    let b2 = (c2 - c2.dot(&b1) * b1).normalize();
    let b3 = b1.cross(&b2);
    Matrix3::from_columns(&[b1, b2, b3])
}

/// Advances the state by `dt` under the (zero-order-hold) command, external
/// force and optional payload. RK4, with the rotation re-orthonormalized
/// after the step.
pub fn step_dynamics(
    state: &RigidBodyState,
    cmd: &ControlCommand,
    params: &VehicleParams,
    payload: Option<&PayloadAttachment>,
    f_e: &Vector3<f64>,
    dt: f64,
) -> Result<RigidBodyState> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(SimError::Config(format!("dynamics dt {dt} outside (0, 0.01]")));
    }
    let finite = state.p.iter().chain(state.v.iter()).chain(state.omega.iter()).all(|x| x.is_finite())
        && state.rot.iter().all(|x| x.is_finite())
        && cmd.thrust.is_finite()
        && f_e.iter().all(|x| x.is_finite());
    if !finite {
        return Err(SimError::NonFinite("step_dynamics input"));
    }
    let cmd = cmd.clamped(params.max_thrust);

    let eval = |p: &Vector3<f64>, v: &Vector3<f64>, r: &Matrix3<f64>, w: &Vector3<f64>| {
        derivative((p, v, r, w), &cmd, params, payload, f_e)
    };

    let k1 = eval(&state.p, &state.v, &state.rot, &state.omega);
    let h = dt / 2.0;
    let k2 = eval(
        &(state.p + h * k1.dp),
        &(state.v + h * k1.dv),
        &(state.rot + h * k1.drot),
        &(state.omega + h * k1.domega),
    );
    let k3 = eval(
        &(state.p + h * k2.dp),
        &(state.v + h * k2.dv),
        &(state.rot + h * k2.drot),
        &(state.omega + h * k2.domega),
    );
    let k4 = eval(
        &(state.p + dt * k3.dp),
        &(state.v + dt * k3.dv),
        &(state.rot + dt * k3.drot),
        &(state.omega + dt * k3.domega),
    );

    let w = dt / 6.0;
    let rot = orthonormalize(
        &(state.rot + w * (k1.drot + 2.0 * k2.drot + 2.0 * k3.drot + k4.drot)),
    );
    Ok(RigidBodyState {
        p: state.p + w * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp),
        v: state.v + w * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv),
        rot,
        omega: state.omega + w * (k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega),
        t: state.t + dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> VehicleParams {
        VehicleConfig::default().params().unwrap()
    }

    #[test]
    fn skew_matches_definition() {
        let s = skew(&Vector3::new(1.0, 2.0, 3.0));
        let expect = Matrix3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(s, expect);
    }

    #[test]
    fn skew_cross_product_identity() {
        let v = Vector3::new(0.3, -1.2, 2.5);
        let w = Vector3::new(-0.7, 0.4, 1.9);
        assert_relative_eq!(skew(&v) * w, v.cross(&w), epsilon = 1e-15);
        assert_relative_eq!(skew(&v) * v, Vector3::zeros(), epsilon = 1e-15);
        assert_relative_eq!(skew(&v).transpose(), -skew(&v), epsilon = 1e-15);
    }

    #[test]
    fn skew_z_cross_x() {
        assert_relative_eq!(
            skew(&Vector3::z()) * Vector3::x(),
            Vector3::y(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn attitude_loop_zero_error_zero_torque() {
        let state = RigidBodyState::at_rest(Vector3::zeros());
        let cmd = ControlCommand { thrust: 10.0, roll: 0.0, pitch: 0.0, yaw: 0.0 };
        assert_relative_eq!(attitude_inner_loop(&state, &cmd, &params()), Vector3::zeros());
    }

    #[test]
    fn attitude_loop_pitch_error_sign() {
        let state = RigidBodyState::at_rest(Vector3::zeros());
        let cmd = ControlCommand { thrust: 10.0, roll: 0.0, pitch: 0.2, yaw: 0.0 };
        let tau = attitude_inner_loop(&state, &cmd, &params());
        assert!(tau.y > 0.0);
        assert_relative_eq!(tau.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(tau.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn attitude_loop_rate_damping_sign() {
        let mut state = RigidBodyState::at_rest(Vector3::zeros());
        state.omega = Vector3::new(0.0, 0.0, 1.0);
        let cmd = ControlCommand { thrust: 10.0, roll: 0.0, pitch: 0.0, yaw: 0.0 };
        let tau = attitude_inner_loop(&state, &cmd, &params());
        assert!(tau.z < 0.0);
    }

    #[test]
    fn hover_equilibrium() {
        let p = params();
        let mut state = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 1.0));
        let cmd = ControlCommand { thrust: p.mass * p.g, roll: 0.0, pitch: 0.0, yaw: 0.0 };
        assert_relative_eq!(cmd.thrust, 33.354, epsilon = 1e-12);
        for _ in 0..1000 {
            state = step_dynamics(&state, &cmd, &p, None, &Vector3::zeros(), PHYSICS_DT).unwrap();
        }
        assert!((state.p - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-9);
        assert!(state.v.norm() < 1e-9);
    }

    #[test]
    fn free_fall_matches_closed_form() {
        let p = params();
        let mut state = RigidBodyState::at_rest(Vector3::zeros());
        let cmd = ControlCommand::zero();
        for _ in 0..100 {
            state = step_dynamics(&state, &cmd, &p, None, &Vector3::zeros(), PHYSICS_DT).unwrap();
        }
        // closed form after 0.1 s: v = -g t, z = -g t^2 / 2
        assert_relative_eq!(state.v.z, -0.981, epsilon = 1e-9);
        assert_relative_eq!(state.p.z, -0.5 * 9.81 * 0.1 * 0.1, epsilon = 1e-9);
    }

    #[test]
    fn payload_pitch_torque_magnitude() {
        let p = params();
        let payload = PayloadAttachment { mass: 0.3, offset: Vector3::new(0.84, 0.0, -0.2) };
        let rot = Matrix3::identity();
        let tau = payload_torque(&rot, &p, Some(&payload));
        // cross-product oracle: (0.84, 0, -0.2) x (0, 0, -m g)
        let oracle = Vector3::new(0.84, 0.0, -0.2).cross(&Vector3::new(0.0, 0.0, -0.3 * 9.81));
        assert_relative_eq!(tau, oracle, epsilon = 1e-12);
        assert_relative_eq!(tau.y, 0.3 * 9.81 * 0.84, epsilon = 1e-12);
        assert_relative_eq!(tau.y, 2.472, epsilon = 1e-3);
    }

    #[test]
    fn payload_add_remove_restores_inertia() {
        let p = params();
        let payload = PayloadAttachment { mass: 0.3, offset: Vector3::new(0.84, 0.0, -0.2) };
        let (m0, j0) = effective_inertia(&p, None);
        let (m1, j1) = effective_inertia(&p, Some(&payload));
        assert!(m1 > m0 && (j1 - j0).norm() > 0.0);
        let (m2, j2) = effective_inertia(&p, None);
        assert_eq!(m0, m2);
        assert_eq!(j0, j2);
    }

    #[test]
    fn free_rotation_preserves_omega_norm() {
        // isotropic inertia, zero attitude gains so the inner loop is silent
        let mut p = params();
        p.inertia = Matrix3::from_diagonal_element(0.05);
        p.attitude.kp = 0.0;
        p.attitude.kd = 0.0;
        let mut state = RigidBodyState::at_rest(Vector3::zeros());
        state.omega = Vector3::new(0.7, -0.4, 1.1);
        let n0 = state.omega.norm();
        let cmd = ControlCommand::zero();
        for _ in 0..10_000 {
            state = step_dynamics(&state, &cmd, &p, None, &Vector3::zeros(), PHYSICS_DT).unwrap();
        }
        assert!((state.omega.norm() - n0).abs() < 1e-6);
    }

    #[test]
    fn rotation_stays_orthonormal() {
        let p = params();
        let mut state = RigidBodyState::at_rest(Vector3::zeros());
        state.omega = Vector3::new(0.5, 0.3, -0.8);
        let cmd = ControlCommand { thrust: 20.0, roll: 0.1, pitch: -0.2, yaw: 0.5 };
        for _ in 0..10_000 {
            state = step_dynamics(&state, &cmd, &p, None, &Vector3::zeros(), PHYSICS_DT).unwrap();
        }
        let err = state.rot.transpose() * state.rot - Matrix3::identity();
        assert!(err.norm() < 1e-6);
        assert!((state.rot.determinant() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn battery_decay_schedule() {
        let b = set_battery_decay(0.5, 60.0).unwrap();
        assert_relative_eq!(b.effectiveness(0.0), 1.0);
        assert_relative_eq!(b.effectiveness(30.0), 0.75);
        assert_relative_eq!(b.effectiveness(60.0), 0.5);
        assert_relative_eq!(b.effectiveness(90.0), 0.5);
        assert!(set_battery_decay(0.0, 60.0).is_err());
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = params();
        let mut state = RigidBodyState::at_rest(Vector3::zeros());
        state.v.x = f64::NAN;
        let cmd = ControlCommand::zero();
        assert!(step_dynamics(&state, &cmd, &p, None, &Vector3::zeros(), PHYSICS_DT).is_err());
    }
}
