use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid road segment {id}: {reason}")]
    InvalidSegment { id: String, reason: String },

    #[error("road layers disagree on CRS: {0}")]
    CrsMismatch(String),

    #[error("road class {0} is not in the width table")]
    UnknownRoadClass(u32),

    #[error("invalid width table: {0}")]
    InvalidWidthTable(String),

    #[error("degenerate administrative unit {0}: boundary has no area")]
    DegenerateAdmin(String),

    #[error("parcel {0} has zero area")]
    ZeroAreaParcel(u64),

    #[error("raw density {raw} exceeds region maximum {max}")]
    DensityAboveMax { raw: f64, max: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("target {target_km2} km2 for {city} exceeds available parcel area {available_km2} km2")]
    UnreachableTarget {
        city: String,
        target_km2: f64,
        available_km2: f64,
    },

    #[error("calibration precondition failed: {0}")]
    Calibration(String),

    #[error("parcel id sets differ; missing from simulated: {missing_in_simulated:?}, missing from reference: {missing_in_reference:?}")]
    IdMismatch {
        missing_in_simulated: Vec<u64>,
        missing_in_reference: Vec<u64>,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("duplicate reading for station {station} on {date}")]
    DuplicateReading { station: String, date: String },

    #[error("{path}: feature {index}: {reason}")]
    Feature {
        path: PathBuf,
        index: usize,
        reason: String,
    },

    #[error("{path}: line {line}: {reason}")]
    Record {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },

    #[error("stage `{stage}` requires the output of stage `{requires}` ({artifact} not found)")]
    MissingDependency {
        stage: String,
        requires: String,
        artifact: PathBuf,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::MissingDependency { .. } => 3,
            _ => 2,
        }
    }
}
