use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of a failure, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Solver,
    Analysis,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain {bounds:?}")]
    Domain { point: Vec<f64>, bounds: Vec<(f64, f64)> },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("normalizer underflow: Z = {z:e}")]
    Underflow { z: f64 },
    #[error("density is identically zero")]
    AllZero,
    #[error("under-resolved density: {0}")]
    Resolution(String),
    #[error("support mismatch: {0}")]
    Support(String),
    #[error("linear solve failed at step {step}: residual {residual:e}")]
    Solver { step: usize, residual: f64 },
    #[error("positivity violated: min value {min:e} at t = {t}")]
    Positivity { min: f64, t: f64 },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn at_time(self, t: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime { t, source: Box::new(e) },
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::InvalidGrid(_) | Error::InvalidArgument(_) => ErrorKind::Config,
            Error::Domain { .. } | Error::Precondition(_) => ErrorKind::Config,
            Error::Underflow { .. } | Error::Solver { .. } | Error::Positivity { .. } | Error::Numeric(_) => {
                ErrorKind::Solver
            }
            Error::AllZero | Error::Resolution(_) | Error::Support(_) => ErrorKind::Analysis,
            Error::AtTime { source, .. } => source.kind(),
            Error::Io(_) => ErrorKind::Io,
        }
    }
}
