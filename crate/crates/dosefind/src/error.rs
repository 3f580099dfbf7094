use dosefind_core::Error as CoreError;

pub type AppResult<T> = Result<T, AppError>;

/// Errors of the std layer, each mapped to one CLI exit code and one HTTP
/// status.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// The request or configuration is malformed.
    #[error("{0}")]
    BadRequest(String),
    /// The request is well-formed but would break a trial invariant.
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    /// A malformed input file; `line` and `column` are 1-based.
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: u64, column: u64, message: String },
    #[error("{0}")]
    Internal(String),
}

impl AppError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        AppError::Io { context: context.into(), source }
    }

    /// Whether the error stems from user-supplied configuration.
    pub fn is_config(&self) -> bool {
        match self {
            AppError::BadRequest(_) | AppError::Unprocessable(_) | AppError::Parse { .. } => true,
            AppError::Core(e) => !matches!(e, CoreError::Computation(_)),
            _ => false,
        }
    }

    /// Stable machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            AppError::BadRequest(_) | AppError::Parse { .. } => "bad_request",
            AppError::Unprocessable(_) => "invariant_violation",
            AppError::NotFound(_) => "not_found",
            AppError::Conflict(_) => "conflict",
            AppError::Core(CoreError::Computation(_)) => "computation_error",
            AppError::Core(_) => "bad_request",
            AppError::Io { .. } | AppError::Internal(_) => "internal",
        }
    }

    /// Re-labels configuration errors raised while mutating a trial as
    /// invariant violations.
    pub fn in_trial(self) -> Self {
        match self {
            AppError::Core(CoreError::Parameter(m) | CoreError::Config(m)) => AppError::Unprocessable(m),
            AppError::BadRequest(m) => AppError::Unprocessable(m),
            other => other,
        }
    }
}
