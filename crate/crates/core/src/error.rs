use std::path::PathBuf;

use thiserror::Error;

use crate::IntentionLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("vehicle {vehicle}: timestamps not strictly increasing at t={t}")]
    NonMonotoneTime { vehicle: String, t: f64 },

    #[error("point ({x}, {y}) is {distance:.2} m from the nearest centerline (limit {limit:.2} m)")]
    OffRoad {
        x: f64,
        y: f64,
        distance: f64,
        limit: f64,
    },

    #[error("invalid lane geometry: {0}")]
    Lane(String),

    #[error("vehicle {vehicle}: expected {expected} features, found {found}")]
    Arity {
        vehicle: String,
        expected: usize,
        found: usize,
    },

    #[error("requested {k} clusters but only {distinct} distinct rows")]
    TooFewDistinctRows { k: usize, distinct: usize },

    #[error("symbol {symbol} out of range for alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("no training sequences")]
    NoSequences,

    #[error("sequence impossible under the model (zero probability at step {step})")]
    ImpossibleSequence { step: usize },

    #[error("prediction time {0} s is off the step grid or leaves an empty prefix")]
    PredictionTime(f64),

    #[error("trail is unscorable: every intention model assigns it zero probability")]
    Unscorable,

    #[error("feature manifest mismatch: {0}")]
    Manifest(String),

    #[error("intention {label} has {found} trails, need at least {needed}")]
    TooFewTrails {
        label: IntentionLabel,
        found: usize,
        needed: usize,
    },

    #[error("empty test set")]
    EmptyTestSet,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
