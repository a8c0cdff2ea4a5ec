use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("unknown scenario `{0}` (expected sparse, medium or dense)")]
    UnknownScenario(String),
    #[error("unknown algorithm `{0}` (expected dql, a2c, ppo, acktr or fixed)")]
    UnknownAlgorithm(String),
    #[error("failed to read config {}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config")]
    Parse(#[from] toml::de::Error),
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { field, reason: reason.into() }
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called on a finished episode; call reset first")]
    EpisodeDone,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error, PartialEq)]
pub enum ApproxError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("curvature factor for layer {layer} is singular; use a positive damping")]
    SingularFactor { layer: usize },
    #[error("non-finite values in {0}; training diverged")]
    NonFinite(&'static str),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint truncated: expected {expected} bytes of parameters, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint holds a {found} agent but {expected} was expected")]
    AlgorithmMismatch { expected: String, found: String },
    #[error("checkpoint I/O")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error("non-finite {0} loss; training diverged")]
    Diverged(&'static str),
    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("agent expects observations of length {agent}, environment produces {env}")]
    ObservationShape { agent: usize, env: usize },
    #[error("cannot draw a chart without records")]
    EmptyChart,
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}

/// `error: cause: cause ...`, for messages that must stand alone.
pub fn error_chain(error: &dyn std::error::Error) -> String {
    let mut text = error.to_string();
    let mut source = error.source();
    while let Some(e) = source {
        text.push_str(": ");
        text.push_str(&e.to_string());
        source = e.source();
    }
    text
}
