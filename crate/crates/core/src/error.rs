use std::path::PathBuf;

use crate::model::Group;

/// Errors produced by the library and surfaced by the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("income must be strictly positive, got {0}")]
    NonPositiveIncome(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("degenerate training set: both label values are required")]
    DegenerateTrainingSet,

    #[error("degenerate hyperplane: normal vector is zero")]
    DegenerateHyperplane,

    #[error("gradient undefined at zero distance")]
    ZeroDistance,

    #[error("no proper rotation maps a normal onto its negation in dimension 1")]
    NoProperRotation,

    #[error("group {0} is not present in the dataset")]
    MissingGroup(Group),

    #[error("group {0} has no positive-labelled individuals")]
    NoPositives(Group),

    #[error("unknown group tag {0}")]
    UnknownGroup(i64),

    #[error("budget {budget} exceeds population size {n}")]
    BudgetExceedsPopulation { budget: usize, n: usize },

    #[error("report undefined: total welfare is {0}, shares need a positive total")]
    ReportUndefined(f64),

    #[error("reports were built over different datasets: {0}")]
    DatasetMismatch(String),

    #[error("invalid value for `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("row {row}, column `{column}`: {reason}")]
    Csv { row: usize, column: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the environment (file system) rather than of the inputs.
    pub fn is_runtime(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
