//! Error taxonomy shared by every module.
//!
//! Each variant carries the operation name (`module::function`) so callers can
//! tell where a failure originated without parsing the message, plus a short
//! human-readable detail string.

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure cases surfaced by the library.
///
/// `Dimension` and `Argument` indicate a malformed call or malformed input
/// data; `Degenerate`, `Singular`, and `Numerical` indicate that structurally
/// valid input defeated the numerics (constant data, rank-deficient systems,
/// non-convergence).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Array shapes or index ranges do not line up.
    #[error("{op}: dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A parameter is outside its documented domain.
    #[error("{op}: invalid argument: {detail}")]
    Argument { op: &'static str, detail: String },

    /// The data admits no meaningful answer (all-zero training set,
    /// zero variance where a spread is required, and so on).
    #[error("{op}: degenerate data: {detail}")]
    Degenerate { op: &'static str, detail: String },

    /// A linear system or factorization lost rank.
    #[error("{op}: singular system: {detail}")]
    Singular { op: &'static str, detail: String },

    /// An iterative routine failed to converge or produced non-finite values.
    #[error("{op}: numerical failure: {detail}")]
    Numerical { op: &'static str, detail: String },
}

impl Error {
    pub fn dimension(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { op, detail: detail.into() }
    }

    pub fn argument(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Argument { op, detail: detail.into() }
    }

    pub fn degenerate(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Degenerate { op, detail: detail.into() }
    }

    pub fn singular(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Singular { op, detail: detail.into() }
    }

    pub fn numerical(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical { op, detail: detail.into() }
    }

    /// Operation name carried by the error.
    pub fn op(&self) -> &'static str {
        match self {
            Error::Dimension { op, .. }
            | Error::Argument { op, .. }
            | Error::Degenerate { op, .. }
            | Error::Singular { op, .. }
            | Error::Numerical { op, .. } => op,
        }
    }
}
