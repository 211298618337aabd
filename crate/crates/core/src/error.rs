use std::path::PathBuf;

use thiserror::Error;

/// Every failure the simulator can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("sequence of length {len} is shorter than kernel {kernel}")]
    SequenceTooShort { len: usize, kernel: usize },

    #[error("empty sequence passed to {0}")]
    EmptySequence(&'static str),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelRange { label: usize, num_classes: usize },

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("non-finite gradient in tensor `{tensor}`")]
    Divergence { tensor: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("cannot build {k} folds from {clients} clients")]
    InfeasibleFold { k: usize, clients: usize },

    #[error("sample `{0}` has no client id")]
    MissingClientId(String),

    #[error("partition infeasible after {retries} draws (alpha = {alpha}, clients = {clients}, samples = {samples})")]
    InfeasiblePartition {
        alpha: f64,
        clients: usize,
        samples: usize,
        retries: usize,
    },

    #[error("no eligible clients in cohort")]
    EmptyCohort,

    #[error("all attention rows are masked")]
    DegenerateAttention,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("client `{client}` diverged: {reason}")]
    ClientDivergence { client: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Schema(_) | Error::Parse { .. } | Error::LabelRange { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
