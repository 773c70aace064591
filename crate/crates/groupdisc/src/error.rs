use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),

    #[error("malformed cell at data row {row}, column `{column}`: {reason}")]
    MalformedCell {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("every row was dropped ({dropped} rows had missing values)")]
    AllRowsDropped { dropped: usize },

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("group `{0}` has no members")]
    EmptyGroup(String),

    #[error("need at least two groups, found {0}")]
    TooFewGroups(usize),

    #[error("value {value} outside [0, 1]")]
    ValueOutOfRange { value: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("latent class {class} received no responsibility mass")]
    DegenerateClass { class: usize },

    #[error("log-likelihood became non-finite")]
    NonFiniteLikelihood,

    #[error("k = {k} exceeds sample count {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("requested {requested} components but at most {max} are available")]
    DimensionTooLarge { requested: usize, max: usize },

    #[error("input has zero variance")]
    ZeroVariance,

    #[error("need at least 3 paired observations, got {0}")]
    TooShort(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("vector has zero norm")]
    ZeroNormVector,

    #[error("level {0} outside 1..=10")]
    LevelOutOfRange(i64),

    #[error("training split contains a single label class")]
    SingleClassTrainingSet,

    #[error("training loss became non-finite")]
    NonFiniteLoss,

    #[error("no label-0 samples in scope, FPR undefined")]
    NoNegatives,

    #[error("required artifact {0} is missing; run the earlier stage first")]
    MissingArtifact(PathBuf),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{path}: {message}")]
    Toml { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
