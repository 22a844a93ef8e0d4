use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{what}: dimension mismatch, expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} is not positive definite: eigenvalue {eigenvalue:e} (index {index})")]
    NotPositiveDefinite {
        what: String,
        eigenvalue: f64,
        index: usize,
    },

    #[error("matrix is not positive semi-definite: eigenvalue {0:e}")]
    NotPsd(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite value in {stage} at iteration {iteration}")]
    NonFinite { stage: String, iteration: usize },

    #[error("solver did not converge after {iterations} iterations (largest KKT violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("training failed: {0}")]
    Training(String),

    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::File {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for configuration errors, 3 for data errors and
    /// 4 for training failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Dimension { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::NotPsd(_)
            | Error::InvalidInput(_)
            | Error::SingleClass
            | Error::File { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 3,
            Error::Singular(_)
            | Error::NonFinite { .. }
            | Error::NotConverged { .. }
            | Error::Training(_) => 4,
        }
    }
}
