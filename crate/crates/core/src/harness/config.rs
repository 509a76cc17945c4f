//! Scenario files: a strict JSON schema with per-section defaults so that
//! benchmark scenarios stay short. Unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autonomy::MissionConfig;
use crate::control::ControlConfig;
use crate::dynamics::VehicleConfig;
use crate::error::{Result, SimError};
use crate::estimation::EkfConfig;
use crate::sensors::SensorsConfig;
use crate::world::SceneConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Full grasp mission over the fruit scene.
    Mission,
    /// Sustained hover at the mission hover point; measures RMSE.
    HoverBench,
    /// Hover through the scene's disturbance schedule; measures peak offset.
    DisturbBench,
    /// Standoff servoing against a scripted moving target.
    ServoBench,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Mission => "mission",
            ExperimentKind::HoverBench => "hover_bench",
            ExperimentKind::DisturbBench => "disturb_bench",
            ExperimentKind::ServoBench => "servo_bench",
        }
    }
}

/// Scripted target motion for the servo bench: per-axis sinusoids around a
/// base point, scaled in rate by `speed_scale`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServoScript {
    pub standoff: f64,
    pub base: [f64; 3],
    pub amplitude: [f64; 3],
    /// Hz per axis.
    pub frequency: [f64; 3],
    pub speed_scale: f64,
}

impl Default for ServoScript {
    fn default() -> Self {
        Self {
            standoff: 0.20,
            base: [0.0, 0.0, 1.15],
            amplitude: [0.08, 0.20, 0.12],
            frequency: [0.05, 0.04, 0.06],
            speed_scale: 1.0,
        }
    }
}

impl ServoScript {
    /// Target position at time `t`, for a script started at `t0`.
    pub fn target_at(&self, t: f64, t0: f64) -> [f64; 3] {
        let tau = (t - t0).max(0.0);
        let mut p = [0.0; 3];
        for (i, out) in p.iter_mut().enumerate() {
            let w = 2.0 * std::f64::consts::PI * self.frequency[i] * self.speed_scale;
            *out = self.base[i] + self.amplitude[i] * (w * tau).sin();
        }
        p
    }
}

/// The complete experiment definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    /// When false, sections absent from the file are an error instead of
    /// taking defaults.
    pub include_defaults: bool,
    pub seed: u64,
    /// Simulated duration cap, seconds.
    pub duration: f64,
    pub experiment: ExperimentKind,
    pub vehicle: VehicleConfig,
    pub sensors: SensorsConfig,
    pub ekf: EkfConfig,
    pub control: ControlConfig,
    pub mission: MissionConfig,
    pub scene: SceneConfig,
    pub servo: ServoScript,
    /// Scheduled kill-switch, seconds.
    pub kill_at: Option<f64>,
    /// Metrics measurement window start, seconds. Defaults per experiment.
    pub measure_start: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            include_defaults: true,
            seed: 0,
            duration: 120.0,
            experiment: ExperimentKind::Mission,
            vehicle: VehicleConfig::default(),
            sensors: SensorsConfig::default(),
            ekf: EkfConfig::default(),
            control: ControlConfig::default(),
            mission: MissionConfig::default(),
            scene: SceneConfig::default(),
            servo: ServoScript::default(),
            kill_at: None,
            measure_start: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        if !text.trim_start().starts_with('{') {
            return Err(SimError::Config("scenario file is not a JSON object".into()));
        }
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        if !config.include_defaults {
            let required = [
                "seed", "duration", "experiment", "vehicle", "sensors", "ekf", "control",
                "mission", "scene",
            ];
            let obj = probe.as_object().expect("checked above");
            for key in required {
                if !obj.contains_key(key) {
                    return Err(SimError::Config(format!(
                        "include_defaults is false but section '{key}' is missing"
                    )));
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration > 0.0 && self.duration <= 600.0) {
            return Err(SimError::Config(format!("duration {} outside (0, 600]", self.duration)));
        }
        self.vehicle.params()?;
        self.sensors.validate()?;
        self.ekf.validate()?;
        self.mission.validate()?;
        if self.control.alpha <= 0.0 || self.control.beta < 0.0 {
            return Err(SimError::Config("control gains must be positive".into()));
        }
        Ok(())
    }

    /// Default measurement-window start per experiment kind.
    pub fn effective_measure_start(&self) -> f64 {
        self.measure_start.unwrap_or(match self.experiment {
            ExperimentKind::Mission => 0.0,
            ExperimentKind::HoverBench | ExperimentKind::DisturbBench => 10.0,
            ExperimentKind::ServoBench => 12.0,
        })
    }
}
