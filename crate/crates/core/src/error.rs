use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The innovation covariance is singular or too badly conditioned to invert.
    #[error("degenerate innovation covariance (condition number {condition:e})")]
    SingularCovariance { condition: f64 },

    #[error("temporal precondition violated: {0}")]
    TemporalOrder(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown class `{class}`; known classes: {known}")]
    UnknownClass { class: String, known: String },

    #[error("scene mismatch; missing scenes: {}", missing.join(", "))]
    SceneMismatch { missing: Vec<String> },

    /// An invariant inside the tracker broke. Always a bug.
    #[error("internal invariant breached: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 for validation problems, 2 for internal breaches.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 2,
            _ => 1,
        }
    }
}
