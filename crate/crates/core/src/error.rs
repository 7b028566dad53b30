use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the elicitation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hyperparameter `{field}`: {reason}")]
    InvalidHyperparameter { field: &'static str, reason: String },

    #[error("invalid configuration `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("feature index {index} out of range for {m} features")]
    FeatureIndex { index: usize, m: usize },

    #[error("invalid feedback: {0}")]
    InvalidFeedback(String),

    #[error("duplicate {kind} feedback for feature {index}")]
    DuplicateFeedback { kind: &'static str, index: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("posterior covariance is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("rank-one update would destroy positive definiteness: 1 + T*S_jj = {0}")]
    RankOnePrecondition(f64),

    #[error("no candidate features remain")]
    NoCandidates,

    #[error("exact enumeration refused: {0}")]
    OracleRefused(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("serialized document has format `{found}` version {found_version}, expected `{expected}` version {expected_version}")]
    Format {
        expected: &'static str,
        expected_version: u32,
        found: String,
        found_version: u32,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
