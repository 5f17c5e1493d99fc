use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration at `{path}`: {reason}")]
    ConfigInvalid { path: String, reason: String },

    #[error("invalid simplex point: {0}")]
    InvalidSimplex(String),

    #[error("quadrature produced a non-finite value ({0})")]
    NonFiniteResult(String),

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("{0} is not Hermitian")]
    NotHermitian(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigendecomposition did not converge: {0}")]
    EigenFailure(String),

    #[error("fewer than two positive coordinates; the point is absorbed")]
    NoActivePair,

    #[error("{unabsorbed} of {count} walks were not absorbed within {max_steps} steps")]
    TooManyUnabsorbed {
        unabsorbed: usize,
        count: usize,
        max_steps: u64,
    },

    #[error("linear solve failed: {0}")]
    SolverFailure(String),

    #[error("{what} ({size}) exceeds the configured cap ({cap})")]
    SizeExceeded {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("chi-square test undefined: {0}")]
    DegenerateExpected(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics themselves, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteResult(_)
                | Error::DegenerateState(_)
                | Error::EigenFailure(_)
                | Error::NoActivePair
                | Error::TooManyUnabsorbed { .. }
                | Error::SolverFailure(_)
                | Error::SizeExceeded { .. }
                | Error::DegenerateExpected(_)
        )
    }
}
