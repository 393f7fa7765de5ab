use thiserror::Error;

/// Errors raised by the filtering, analysis and experiment code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("invalid plant: {0}")]
    InvalidPlant(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("riccati iteration did not converge after {iterations} iterations (last change {residual:e})")]
    RiccatiNoConvergence { iterations: usize, residual: f64 },

    #[error("jacobi eigen-solver did not converge after {0} sweeps")]
    EigenNoConvergence(usize),

    #[error("lyapunov rate {0} is not below 1")]
    LyapunovInfeasible(f64),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate}, relative change {change:e})")]
    PowerIteration {
        iterations: usize,
        estimate: f64,
        change: f64,
    },

    #[error("config error in `{field}` (line {line}): {message}")]
    Config {
        field: String,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidGraph(_)
                | Error::Disconnected
                | Error::Dimension(_)
                | Error::NotSymmetric(_)
                | Error::NotPositiveDefinite(_)
                | Error::InvalidPlant(_)
                | Error::InvalidParameter(_)
                | Error::Config { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
