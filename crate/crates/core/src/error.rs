use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input violates a documented precondition (lengths, signs, ranges).
    #[error("validation error: {0}")]
    Validation(String),

    /// Zero-energy modes whose sign cannot be assigned by chirality.
    #[error("degenerate mid-gap eigenvalues at indices {indices:?}")]
    DegenerateMidgap { indices: Vec<usize> },

    #[error("gap closes at v = w = {0} GHz, winding integrand is singular")]
    GapClosing(f64),

    #[error("mode classification needs at least 4 sites, got {0}")]
    ClassificationUnsupported(usize),

    #[error("localization fit unsupported: {0}")]
    FitUnsupported(String),

    #[error("gate table query at {query} V outside sampled range [{lo}, {hi}] V")]
    Extrapolation { query: f64, lo: f64, hi: f64 },

    #[error("singular circuit element at {0} GHz")]
    SingularElement(f64),

    /// Floating point breakdown inside an otherwise valid computation.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by bad inputs rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::ClassificationUnsupported(_) | Error::Extrapolation { .. }
        )
    }
}
