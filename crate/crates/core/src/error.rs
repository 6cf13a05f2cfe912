use std::path::PathBuf;

use crate::rdvi::FitTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("non-finite gradient component {component} from sample {sample}")]
    NonFiniteGradient { sample: usize, component: usize },

    #[error("optimization diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        trace: Box<FitTrace>,
    },

    #[error(
        "no proposal accepted after {proposals} draws (min L = {min_l:.4}, mean L = {mean_l:.4}, T = {threshold:.4})"
    )]
    NoAcceptances {
        proposals: usize,
        min_l: f64,
        mean_l: f64,
        threshold: f64,
    },

    #[error("quadrature grid too coarse: normalization changed by {0:.3e} under refinement")]
    GridTooCoarse(f64),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
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

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::DimensionMismatch { .. } | Error::Parse { .. }
        )
    }
}
