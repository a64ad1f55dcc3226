// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite float {0} cannot be converted to an exact rational")]
    NonFinite(f64),

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown token id {0}")]
    UnknownToken(u32),

    #[error("sequence of length {len} exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("input {0:?} is outside the task domain")]
    OutOfDomain(Vec<u32>),

    #[error("epsilon must be non-negative, got {0}")]
    NegativeEpsilon(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training budget of {steps} steps exhausted: {report}")]
    TrainingBudgetExhausted { steps: usize, report: String },

    #[error("surrogate fitting budget of {steps} steps exhausted with {disagreements} disagreements")]
    FitBudgetExhausted { steps: usize, disagreements: usize },

    #[error("extraction produced an unfaithful circuit for task {0}")]
    UnfaithfulExtraction(String),

    #[error("missing artifact {path}: run `{command}` first")]
    MissingArtifact { path: PathBuf, command: &'static str },

    #[error("malformed artifact {path}: {reason}")]
    MalformedArtifact { path: PathBuf, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
