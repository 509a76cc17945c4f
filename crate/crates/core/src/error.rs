//! Error type shared across the simulator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("scene error: {0}")]
    Scene(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("unknown fruit id {0}")]
    UnknownFruit(u32),
    #[error("fruit {0} is not gripped")]
    NotGripped(u32),
    #[error("unknown instance id {0}")]
    UnknownInstance(u32),
    #[error("instance {0} already removed")]
    InstanceRemoved(u32),
    #[error("telemetry parse error at line {line}: {msg}")]
    TelemetryParse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
