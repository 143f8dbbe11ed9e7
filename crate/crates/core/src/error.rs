//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: lat={lat}, lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("invalid track for phone {phone_id}: {reason}")]
    InvalidTrack { phone_id: String, reason: String },

    #[error("invalid track pair: {0}")]
    InvalidPair(String),

    #[error("csv line {line}: {reason}")]
    Csv { line: u64, reason: String },

    #[error("unexpected csv header: expected `{expected}`, got `{got}`")]
    Header { expected: String, got: String },

    #[error("cell ids not present in tower database: {0:?}")]
    UnresolvedCells(Vec<String>),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("training data contains a single class only")]
    SingleClass,

    #[error("non-finite value in feature matrix")]
    NonFiniteFeature,

    #[error("feature dimension mismatch: model has {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("pair {pair_id} has no switches and cannot be scored")]
    Unscorable { pair_id: String },

    #[error("invalid config value for `{key}`: {reason}")]
    ConfigValue { key: String, reason: String },

    #[error("unknown config key `{0}`")]
    ConfigKey(String),

    #[error("experiment split failed: {0}")]
    Split(String),

    #[error("unsupported pipeline format version {0}")]
    PipelineVersion(u32),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
