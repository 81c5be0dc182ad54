//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong across the pipeline, from file ingestion to
/// numerical failures inside the kernel/dynamics code.
#[derive(Debug, Error)]
pub enum Error {
    /// IDX file starts with an unexpected magic word.
    #[error("bad IDX magic in {path}: expected 0x{expected:08x}, found 0x{found:08x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    /// IDX payload is shorter than its header promises.
    #[error("truncated IDX file {path}: expected {expected} bytes of payload, found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },

    /// Shapes disagree (image/label counts, matrix dimensions, ...).
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A cell of a CSV input could not be parsed.
    #[error("parse error at row {row}, column {col}: {msg}")]
    ParseError { row: usize, col: String, msg: String },

    /// The requested label column does not exist in the CSV header.
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),

    /// A class ran out of samples while drawing a task split.
    #[error("insufficient samples for class {class}: need {needed}, have {available}")]
    InsufficientSamples {
        class: u8,
        needed: usize,
        available: usize,
    },

    /// Invalid metaparameter combination.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An inverse trig argument left its domain by more than roundoff allows.
    #[error("numerical domain violation: {0}")]
    NumericalDomain(String),

    /// Eigendecomposition failed its quality check even after jitter retries.
    #[error("eigendecomposition failure: {0}")]
    EigFailure(String),

    /// Kernel is singular where an inverse is required (t = infinity, lambda = 0).
    #[error("singular kernel: {0}")]
    SingularKernel(String),

    /// A Gaussian was requested with variance <= 0.
    #[error("non-positive variance: {0}")]
    NonPositiveVariance(f64),

    /// An aggregate over an empty collection.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A rank statistic is undefined (e.g. one of the sequences is constant).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Gram cache file is malformed or does not match the expected keys.
    #[error("bad gram cache {path}: {msg}")]
    BadCache { path: String, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short stable code used in failure rows of results CSVs.
    pub fn code(&self) -> &'static str {
        match self {
            Error::BadMagic { .. } => "bad_magic",
            Error::Truncated { .. } => "truncated",
            Error::DimMismatch(_) => "dim_mismatch",
            Error::ParseError { .. } => "parse_error",
            Error::MissingLabelColumn(_) => "missing_label_column",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NumericalDomain(_) => "numerical_domain",
            Error::EigFailure(_) => "eig_failure",
            Error::SingularKernel(_) => "singular_kernel",
            Error::NonPositiveVariance(_) => "non_positive_variance",
            Error::EmptyInput(_) => "empty_input",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::BadCache { .. } => "bad_cache",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
