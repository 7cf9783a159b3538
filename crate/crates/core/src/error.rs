use thiserror::Error;

/// Errors produced anywhere in the co-design pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A value outside its mathematical or physical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Genome encode/decode failure.
    #[error("codec error: {0}")]
    Codec(String),

    /// The simulator produced a non-finite quantity.
    #[error("simulation diverged: {quantity} = {value}")]
    SimulationDiverged { quantity: String, value: f64 },

    /// Network or observation layouts disagree.
    #[error("configuration error: {0}")]
    Shape(String),

    /// A run-configuration field failed validation.
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    /// A metric is not defined for the given trajectory (e.g. stationary walker).
    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    /// More than half of the environments diverged in one iteration.
    #[error("training failed: {0}")]
    TrainingFailure(String),

    /// A checkpoint was built for a different morphology than requested.
    #[error("morphology mismatch: checkpoint has {checkpoint}, config has {config}")]
    MorphologyMismatch { checkpoint: String, config: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
