//! Deterministic software-in-the-loop simulator for an autonomous aerial
//! fruit-harvesting system.
//!
//! The crate models a quadrotor with an off-center gripper arm flying grasp
//! missions against a desk-scale trellis scene. It contains:
//!
//! - [`world`]: the harvesting scene (fruits, region, disturbances, gripper
//!   geometry) and its ground-truth queries,
//! - [`dynamics`]: rigid-body equations of motion integrated with RK4 on
//!   SO(3), off-center payload effects and a battery-decay thrust model,
//! - [`sensors`]: simulated IMU, SLAM pose, depth, detection and tracker
//!   streams with seeded, per-stream noise,
//! - [`estimation`]: an error-state EKF fusing IMU propagation with SLAM
//!   pose updates,
//! - [`control`]: the per-axis position/velocity outer loop, the
//!   thrust-microstepping accelerometer-feedback controller, the direct
//!   acceleration baseline, and thrust-vector attitude extraction,
//! - [`perception`]: 3D instance mapping and grasp-target selection,
//! - [`autonomy`]: the mission state machine from arming to disarm,
//! - [`harness`]: scenario configs, the simulation loop, telemetry,
//!   metrics and the benchmark suites.
//!
//! Every run is a pure function of `(scenario, seed)`: all randomness flows
//! through named per-stream RNGs and all reductions are fixed-order, so two
//! runs with identical inputs produce byte-identical telemetry and metrics.

pub mod autonomy;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod perception;
pub mod rng;
pub mod sensors;
pub mod world;

pub use error::{Result, SimError};
