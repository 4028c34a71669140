use std::path::PathBuf;

use thiserror::Error;

use crate::game::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game:\n{0}")]
    InvalidGame(ValidationReport),

    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("matrix game solve left duality gap {gap:e} above tolerance {tol:e}")]
    SolverGap { gap: f64, tol: f64 },

    #[error(
        "diameter enumeration needs {count} min-player policies, above the cap of {cap}; \
         supply the diameter bound explicitly (user_supplied)"
    )]
    EnumerationCap { count: f64, cap: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("sweep episode failed (T = {horizon}, seed = {seed}): {source}")]
    Episode {
        horizon: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for numerical non-convergence, including convergence failures
    /// surfaced through a failed sweep episode.
    pub fn is_convergence(&self) -> bool {
        match self {
            Error::NotConverged { .. } | Error::SolverGap { .. } => true,
            Error::Episode { source, .. } => source.is_convergence(),
            _ => false,
        }
    }
}
