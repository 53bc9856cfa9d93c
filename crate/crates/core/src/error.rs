use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry: edge {edge} has length {length:e}")]
    DegenerateGeometry { edge: usize, length: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("equilibrium sensitivity unavailable: {0}")]
    SensitivityUnavailable(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("rollout failed at continuation step {step}: {source}")]
    Rollout {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("backward pass aborted at step {step}: {source}")]
    Backward {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite gradient entry at index {0}")]
    NonFiniteGradient(usize),

    #[error("all {0} population candidates produced non-finite losses")]
    PopulationFailed(usize),

    #[error("snapshot {index}: {source}")]
    Snapshot {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Rollout {
            step,
            source: Box::new(self),
        }
    }

    /// Stable machine-readable tag, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DegenerateGeometry { .. } => "degenerate_geometry",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::SensitivityUnavailable(_) => "sensitivity_unavailable",
            Error::SolverFailure(_) => "solver_failure",
            Error::Rollout { .. } => "rollout_failure",
            Error::Backward { .. } => "backward_failure",
            Error::NonFiniteGradient(_) => "non_finite_gradient",
            Error::PopulationFailed(_) => "population_failed",
            Error::Snapshot { .. } => "snapshot_failure",
            Error::Config(_) => "config",
            Error::Malformed { .. } => "malformed_file",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
