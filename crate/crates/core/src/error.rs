//! Crate-wide error type with a coarse category used for process exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage attached to errors surfaced by the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Data,
    Train,
    Attack,
    Evaluate,
    Report,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Data => "data",
            Stage::Train => "train",
            Stage::Attack => "attack",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("column {column:?} has no finite values to impute from")]
    UnimputableColumn { column: String },

    #[error("label {value:?} in column {column:?} does not map to a class")]
    UnmappableLabel { column: String, value: String },

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("roc-auc undefined: labels contain a single class")]
    UndefinedAuc,

    #[error("duplicate epsilon {0} in degradation table")]
    DuplicateEpsilon(f64),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse grouping used by the CLI: spec problems exit 2, data problems 3,
/// numeric problems 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Spec,
    Data,
    Numeric,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Spec => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
        }
    }
}

impl Error {
    pub fn at_stage(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidSpec(_) | Error::InvalidArgument(_) | Error::Json(_) => {
                ErrorCategory::Spec
            }
            Error::Csv(_)
            | Error::Io(_)
            | Error::Data(_)
            | Error::UnimputableColumn { .. }
            | Error::UnmappableLabel { .. }
            | Error::ModelFormat(_) => ErrorCategory::Data,
            Error::ShapeMismatch(_)
            | Error::NonFinite(_)
            | Error::UndefinedAuc
            | Error::DuplicateEpsilon(_) => ErrorCategory::Numeric,
            Error::Stage { source, .. } => source.category(),
        }
    }
}
