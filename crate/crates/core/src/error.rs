use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a domain invariant (weights, shapes, parameters).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Sinkhorn did not reach the requested marginal tolerance.
    #[error("sinkhorn did not converge{}: residual {residual:.3e} after {iterations} iterations",
        .edge.map(|(a, b)| format!(" on edge ({}, {})", a + 1, b + 1)).unwrap_or_default())]
    NonConvergence {
        edge: Option<(usize, usize)>,
        iterations: usize,
        residual: f64,
    },

    #[error("dense tensor with {entries} entries exceeds the cap of {cap}")]
    CapExceeded { entries: u128, cap: usize },

    #[error("non-finite value at {0}")]
    NonFinite(String),

    /// Positive mass in `P` where the reference `Q` vanishes.
    #[error("KL divergence is infinite: P > 0 where Q = 0 at index {0}")]
    InfiniteDivergence(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::NonFinite(_) | Error::InfiniteDivergence(_)
        )
    }
}
