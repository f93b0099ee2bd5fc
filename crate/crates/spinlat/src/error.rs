use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied parameters outside an operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Two sites coincide, so their coupling diverges.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("rejection sampling gave up after {attempts} attempts: {reason}")]
    Sampling { attempts: usize, reason: String },
    #[error("gateway placement failed: {0}")]
    Placement(String),
    /// More (or fewer) than one stationary mode where exactly one is required.
    #[error("expected a unique zero mode, found {found}")]
    ZeroModes { found: usize },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("numerical failure in {what} (residual {residual:.3e})")]
    Numerical { what: String, residual: f64 },
    #[error("linear algebra backend: {0}")]
    Backend(String),
}

impl Error {
    /// True for failures caused by bad parameters rather than by the solver.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::DegenerateGeometry(_)
                | Error::Sampling { .. }
                | Error::Placement(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
