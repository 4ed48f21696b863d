//! Batch CLI pipeline: synthetic data, features, embeddings, calibrated
//! forests, predictions, evaluation, and rolling retrains.

pub mod artifacts;
pub mod bundle;
pub mod commands;
pub mod config;

use thiserror::Error;

/// Errors carry the process exit code: 2 config, 3 missing artifact,
/// 4 data or runtime failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {artifact}: run `cltv {producer}` first")]
    MissingArtifact { artifact: String, producer: String },
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> CliError {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> CliError {
        CliError::Data(msg.into())
    }

    pub fn io(e: std::io::Error) -> CliError {
        CliError::Data(e.to_string())
    }

    pub fn json(e: serde_json::Error) -> CliError {
        CliError::Data(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<cltv_core::data_model::DataError> for CliError {
    fn from(e: cltv_core::data_model::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<cltv_core::datagen::DatagenError> for CliError {
    fn from(e: cltv_core::datagen::DatagenError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<cltv_core::pairgen::PairgenError> for CliError {
    fn from(e: cltv_core::pairgen::PairgenError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<cltv_core::sgns::SgnsError> for CliError {
    fn from(e: cltv_core::sgns::SgnsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<cltv_core::forest::ForestError> for CliError {
    fn from(e: cltv_core::forest::ForestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<cltv_core::calibration::CalibrationError> for CliError {
    fn from(e: cltv_core::calibration::CalibrationError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<cltv_core::evaluation::EvalError> for CliError {
    fn from(e: cltv_core::evaluation::EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}
