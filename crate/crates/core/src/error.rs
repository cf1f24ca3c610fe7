use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The request is well formed but exceeds a configured size limit.
    #[error("{what}: n = {n} exceeds the limit {max} ({detail})")]
    Capacity {
        what: &'static str,
        n: usize,
        max: usize,
        detail: String,
    },

    #[error("invalid F-matrix at column {column}: {reason}")]
    InvalidFMatrix { column: usize, reason: String },

    #[error("infeasible transition from state {from} to state {to}")]
    Infeasible { from: usize, to: usize },

    #[error("tier mismatch: expected tier {expected}, found tier {found}")]
    TierMismatch { expected: usize, found: usize },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("covariance matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("reward is zero along every path; the transformed variable is degenerate at zero")]
    DegenerateReward,

    #[error("more than {cap} optimal paths; enumeration stopped")]
    PathOverflow { cap: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
