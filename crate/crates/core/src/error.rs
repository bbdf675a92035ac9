use thiserror::Error;

/// Errors produced by the estimation pipeline, the simulation harness and the
/// file layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FpcaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no observations inside the smoothing window at {location}")]
    NoLocalData { location: String },

    #[error("degenerate (zero) scale estimate at {location}")]
    DegenerateScale { location: String },

    #[error("iteration did not converge after {iterations} iterations ({context})")]
    NoConvergence { iterations: usize, context: String },

    #[error("{failed} of {total} covariance cells could not be estimated")]
    InsufficientPairings { failed: usize, total: usize },

    #[error("surface has no missing-free cell to smooth")]
    AllMissing,

    #[error("eigen-spectrum has no positive eigenvalue")]
    NoPositiveSpectrum,

    #[error("singular linear system for curve {curve}")]
    SingularSystem { curve: String },

    #[error("every bandwidth candidate failed during cross-validation")]
    AllCandidatesFailed,

    #[error("every curve is flagged as contaminated")]
    NoCleanCurves,

    #[error("rank correlation undefined for a constant vector")]
    DegenerateRanks,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("input file is empty: {0}")]
    EmptyFile(String),

    #[error("duplicate time {time} for curve `{curve}` at line {line}")]
    DuplicateTime { curve: String, time: f64, line: usize },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FpcaError {
    fn from(err: std::io::Error) -> Self {
        FpcaError::Io(err.to_string())
    }
}

impl From<csv::Error> for FpcaError {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
        FpcaError::Parse {
            line,
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, FpcaError>;
