use thiserror::Error;

/// Problem-data errors: shapes, definiteness, lengths, file parsing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: String,
        expected: String,
        found: String,
    },
    #[error("`{matrix}` is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { matrix: String, min_eigenvalue: f64 },
    #[error("`{matrix}`{} is not positive definite (min eigenvalue {min_eigenvalue:e})", stage_suffix(*.stage))]
    NotPd {
        matrix: String,
        stage: Option<usize>,
        min_eigenvalue: f64,
    },
    #[error("`{field}` has length {found}, need at least {expected}")]
    WrongLength {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("index {index} out of range (last defined index {last})")]
    IndexOutOfRange { index: usize, last: usize },
    #[error("`{0}` contains a non-finite entry")]
    NonFinite(String),
    #[error("malformed problem file at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn stage_suffix(stage: Option<usize>) -> String {
    stage.map(|k| format!(" at stage {k}")).unwrap_or_default()
}

/// Numerical failures of the Riccati, feedforward, filter and oracle solves.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("R + BᵀKB is not positive definite at stage {stage:?}")]
    SingularInnerMatrix { stage: Option<usize> },
    #[error("no convergence after {iterations} iterations (last delta {last_delta:e})")]
    Convergence { iterations: usize, last_delta: f64 },
    #[error("closed loop is not stable: spectral radius {spectral_radius}")]
    UnstableClosedLoop { spectral_radius: f64 },
    #[error("feedforward system matrix is numerically singular (condition {condition:e})")]
    SingularSystem { condition: f64 },
    #[error("innovation covariance is numerically singular")]
    SingularInnovation,
    #[error("batch normal equations are singular")]
    SingularNormalEquations,
    #[error("stage index {index} out of range for horizon {horizon}")]
    IndexOutOfRange { index: usize, horizon: usize },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("rollout {index} failed: {source}")]
    Rollout {
        index: usize,
        #[source]
        source: Box<SimulationError>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("burn-in {burn_in} leaves no stages in a trace of length {len}")]
    BurnInTooLarge { burn_in: usize, len: usize },
    #[error("batches do not match: {0}")]
    MismatchedBatches(String),
    #[error("rollout {index} diverged")]
    Diverged { index: usize },
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}
