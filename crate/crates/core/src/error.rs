use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Symmetric factorization failed; carries the smallest eigenvalue found.
    #[error("{what} is not symmetric positive definite (smallest eigenvalue {eigenvalue:e})")]
    NotSpd { what: &'static str, eigenvalue: f64 },

    #[error("{what} is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { what: &'static str, asymmetry: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite {what} at sample point {sample:?}")]
    NonFiniteSample { what: &'static str, sample: Vec<f64> },

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("energy increased at t = {time}: {before:e} -> {after:e}")]
    Monotonicity { time: f64, before: f64, after: f64 },

    #[error("descent aborted at iteration {iteration}: {source}")]
    Descent {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_)
            | Error::NonFiniteSample { .. }
            | Error::Integration { .. }
            | Error::Monotonicity { .. }
            | Error::NotSpd { .. } => true,
            Error::Descent { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
