use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar argument fell outside the domain of a formula.
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    /// Covariance violates the Schrödinger–Robertson bound (det < 1/4).
    #[error("unphysical covariance: determinant {det} is below 1/4")]
    Unphysical { det: f64 },

    /// Covariance with a non-positive determinant, so no purity can be computed.
    #[error("ill-estimated covariance: determinant {det} is not positive")]
    NonPositiveDeterminant { det: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("bin {bin} has {count} samples, at least {needed} required")]
    InsufficientSamples {
        bin: usize,
        count: usize,
        needed: usize,
    },

    #[error("sample size {n} outside supported range [{min}, {max}]; subsample the data")]
    SampleSizeOutOfRange { n: usize, min: usize, max: usize },

    #[error("degenerate sample: zero variance")]
    DegenerateSample,

    #[error("profile already baseline-subtracted")]
    AlreadySubtracted,

    /// F = 0 maps to a pure state, for which the temperature is zero only as a limit.
    #[error("pure state: temperature is zero (F = {f})")]
    PureState { f: f64 },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("ensemble failed: {failed} of {total} acquisitions could not be analyzed")]
    EnsembleFailure { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64) -> Self {
        Error::Domain { what, value }
    }

    /// True for I/O failures, which the CLI maps to a distinct exit code.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
