use thiserror::Error;

/// Errors raised by the collocation, solver and analysis layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular matrix: pivot {pivot} below tolerance")]
    SingularMatrix { pivot: usize },

    #[error("factorization failure: zero pivot at index {pivot}")]
    FactorizationFailure { pivot: usize },

    #[error("eigenvalue iteration did not converge after {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("Newton solve at node {node} (iteration {iteration}) did not converge, last residual {residual:e}")]
    NodeSolveFailure {
        node: usize,
        iteration: usize,
        residual: f64,
    },

    #[error("collocation solve failed: {0}")]
    StepFailure(String),

    #[error("step {step} failed: {source}")]
    IntegrationFailure {
        step: usize,
        #[source]
        source: Box<SdcError>,
    },

    #[error("coefficients file: {0}")]
    Coefficients(String),
}

pub type Result<T> = std::result::Result<T, SdcError>;
