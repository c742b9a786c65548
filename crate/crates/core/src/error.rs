use std::path::PathBuf;

use crate::trip_data::ZoneId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: malformed trip row: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: zone {zone} is not in the zone universe")]
    UnknownZone { line: u64, zone: ZoneId },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("profile of {0} is undefined: no observed trips")]
    UndefinedProfile(String),

    #[error("vehicle {0} is not registered in the graph")]
    UnknownVehicle(String),

    #[error("normal vector must have unit length, got norm {0}")]
    NonUnitNormal(f64),

    #[error("training diverged at epoch {epoch}: non-finite parameter")]
    Divergence { epoch: usize },

    #[error("ranking domains differ for vehicle {0}")]
    DomainMismatch(String),

    #[error("{method} decomposition failed: {reason}")]
    Decomposition { method: &'static str, reason: String },

    #[error("no coordinates for zone {0}")]
    MissingCoordinate(ZoneId),

    #[error("k = {k} is outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("invalid input data: {0}")]
    Data(String),

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("missing artifact {}: run {stage} first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

/// Coarse error classes, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Runtime,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Toml(_) | Error::KOutOfRange { .. } => ErrorCategory::Config,
            Error::MalformedRow { .. }
            | Error::UnknownZone { .. }
            | Error::UndefinedProfile(_)
            | Error::UnknownVehicle(_)
            | Error::DomainMismatch(_)
            | Error::MissingCoordinate(_)
            | Error::Data(_)
            | Error::Csv(_)
            | Error::Checkpoint(_)
            | Error::MissingArtifact { .. } => ErrorCategory::Data,
            Error::NonUnitNormal(_)
            | Error::Divergence { .. }
            | Error::Decomposition { .. }
            | Error::Io { .. }
            | Error::Json(_) => ErrorCategory::Runtime,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
