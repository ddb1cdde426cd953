use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A point that must lie strictly inside the Weyl chamber does not.
    #[error("point outside the Weyl chamber (min pairing {min_pairing:e})")]
    OutsideChamber { min_pairing: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("Newton solve did not converge after {iterations} iterations (residual {residual:e})")]
    SolverFailure {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("fixed-point map is not a contraction (rate {rate} >= 1)")]
    ContractionViolated { rate: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("step {step}: {source}")]
    Step { step: usize, source: Box<Error> },

    #[error("path {path_id}: {source}")]
    Path { path_id: u64, source: Box<Error> },

    #[error("fit error: {0}")]
    Fit(String),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn on_path(self, path_id: u64) -> Self {
        Error::Path {
            path_id,
            source: Box::new(self),
        }
    }

    /// True when the error (possibly wrapped in path/step context) is a
    /// numerical solver failure rather than a configuration problem.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::SolverFailure { .. } | Error::ContractionViolated { .. } => true,
            Error::Step { source, .. } | Error::Path { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
