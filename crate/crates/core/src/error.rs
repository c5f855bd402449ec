use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter vector has length {got}, model dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("AR polynomial has a root within the unit circle margin (|z| = {modulus:.6})")]
    NonStationary { modulus: f64 },

    #[error("MA polynomial has a root within the unit circle margin (|z| = {modulus:.6})")]
    NonInvertible { modulus: f64 },

    #[error("spectral level must be positive and finite, got {0}")]
    InvalidLevel(f64),

    #[error("model must have at least one free parameter")]
    EmptyModel,

    #[error("parameter vector has not been validated against the model")]
    NotValidated,

    #[error("derivative order {0} is not supported (max 3)")]
    OrderUnsupported(usize),

    #[error("covariance matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is singular or not positive definite")]
    SingularMatrix,

    #[error("quadrature did not converge: change {change:e} at {nodes} nodes")]
    QuadratureNotConverged { nodes: usize, change: f64 },

    #[error("finite-difference stencil leaves the parameter domain at {theta:?}")]
    StencilOutOfDomain { theta: Vec<f64> },

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    DidNotConverge { iterations: usize, grad_norm: f64 },

    #[error("observed information is not positive definite at the returned point")]
    HessianNotPd,

    #[error("oracle posterior region truncated (boundary mass {mass:e})")]
    OracleRegionTruncated { mass: f64 },

    #[error("spectral density is not strictly positive at node {node}")]
    NonPositiveDensity { node: usize },

    #[error("{failed} of {reps} replications failed to fit")]
    TooManyFitFailures { failed: usize, reps: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
