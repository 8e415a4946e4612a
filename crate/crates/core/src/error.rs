use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("subject alignment error: {0}")]
    Alignment(String),
    #[error("missing value: {0}")]
    MissingValue(String),
    #[error("exposure is constant (all {0}); both exposure levels are required")]
    ConstantExposure(u8),
    #[error("invalid exposure value {0:?}; expected 0 or 1")]
    InvalidExposure(String),
    #[error("invalid fold count {v} for {n} subjects (need 2 <= v <= n)")]
    InvalidFoldCount { v: usize, n: usize },
    #[error("design matrix is rank deficient (column {0} is aliased)")]
    RankDeficient(usize),
    #[error("invalid k = {k} for {n} training points")]
    InvalidK { k: usize, n: usize },
    #[error("logistic regression did not converge: {0}")]
    Separation(String),
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("every learner in the library failed to fit")]
    AllLearnersFailed,
    #[error("clever covariate is identically zero")]
    DegenerateCovariate,
    #[error("cannot estimate variance hyperparameters: {0}")]
    DegenerateVariances(String),
    #[error("p-value {0} outside [0, 1]")]
    OutOfRangeP(f64),
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },
    #[error("result file does not match the report schema: {0}")]
    SchemaMismatch(String),
    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. } | Error::InvalidFoldCount { .. } | Error::InvalidK { .. } => {
                ErrorClass::Config
            }
            Error::Parse { .. }
            | Error::Alignment(_)
            | Error::MissingValue(_)
            | Error::ConstantExposure(_)
            | Error::InvalidExposure(_)
            | Error::SchemaMismatch(_)
            | Error::Io(_) => ErrorClass::Data,
            Error::Replicate { source, .. } => source.class(),
            _ => ErrorClass::Numeric,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        }
    }
}
