use thiserror::Error;

/// Errors raised by the analysis pipeline.
///
/// Every variant maps onto a stable machine-readable class via [`Error::class`],
/// which the command-line front end prints on failure.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("value out of bounds: {0}")]
    OutOfBounds(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size underflow at t = {t}: h = {h:e}")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("non-finite state at t = {0}")]
    NonFiniteState(f64),

    #[error("signal is not periodic: {0}")]
    NotPeriodic(String),

    #[error("eigensolver did not converge after {0} sweeps")]
    ConvergenceFailure(usize),

    #[error("no eigenvalue gap reaches ratio {required}: largest consecutive ratio is {best}")]
    DegenerateGap { required: f64, best: f64 },

    #[error("projected point could not be evaluated: {0}")]
    ProjectionOutOfDomain(String),

    #[error("too many failed samples: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("sample too small: need at least {min}, got {got}")]
    TooSmallSample { min: usize, got: usize },

    #[error("alignment mismatch: {0}")]
    AlignmentMismatch(String),

    #[error("profile trace too short: {successful} successful points, need {required}")]
    InsufficientTrace { successful: usize, required: usize },

    #[error("malformed csv: {0}")]
    MalformedCsv(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable identifier for the error kind.
    pub fn class(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::OutOfBounds(_) => "OutOfBounds",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::NonFiniteState(_) => "NonFiniteState",
            Error::NotPeriodic(_) => "NotPeriodic",
            Error::ConvergenceFailure(_) => "ConvergenceFailure",
            Error::DegenerateGap { .. } => "DegenerateGap",
            Error::ProjectionOutOfDomain(_) => "ProjectionOutOfDomain",
            Error::TooManyFailures { .. } => "TooManyFailures",
            Error::TooSmallSample { .. } => "TooSmallSample",
            Error::AlignmentMismatch(_) => "AlignmentMismatch",
            Error::InsufficientTrace { .. } => "InsufficientTrace",
            Error::MalformedCsv(_) => "MalformedCsv",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
