//! Scenario loading, the simulation loop, telemetry, metrics and the
//! benchmark suites.

pub mod bench;
pub mod config;
pub mod metrics;
pub mod sim;
pub mod telemetry;

pub use config::{ExperimentKind, ScenarioConfig};
pub use metrics::{MetricsReport, RunMeta};
pub use sim::{run_scenario, RunArtifacts};
