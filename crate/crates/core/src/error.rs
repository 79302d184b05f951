use thiserror::Error;

/// Crate-wide error type.
///
/// `Input` covers malformed caller data (exit code 2 in the CLI); `Fit` and
/// `Numeric` cover optimization and floating-point failures (exit code 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    /// A metric whose value is undefined on the given data (e.g. Pearson on a
    /// constant sequence). Reported as missing, never silently coerced to 0.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("fit failed at iteration {iteration}: {message}")]
    Fit { iteration: usize, message: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Fit { .. } | Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
