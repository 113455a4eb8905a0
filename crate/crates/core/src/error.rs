use thiserror::Error;

/// Errors produced by mesh construction, assembly and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular factorization at column {col}")]
    SingularFactorization { col: usize },

    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:e})")]
    IterativeNonConvergence { iterations: usize, residual: f64 },

    #[error("non-positive inverse temperature ({value:e}) at node {node}")]
    NonPositiveTheta { node: usize, value: f64 },

    #[error("non-finite integrand value on element {element}, quadrature point {point}")]
    NonFiniteIntegrand { element: usize, point: usize },

    #[error("mobility matrix is not positive definite (min eigenvalue {min_eig:e})")]
    IndefiniteMobility { min_eig: f64 },

    #[error("convex-concave split with alpha = {alpha} is not valid on the state box (min eigenvalue {min_eig:e})")]
    InvalidSplit { alpha: f64, min_eig: f64 },

    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonNonConvergence { iterations: usize, residual: f64 },

    #[error("theta positivity could not be maintained after {halvings} damping halvings")]
    ThetaFloor { halvings: usize },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
