//! Crate-wide error type.

use alloc::string::String;

use crate::expr::ParseError;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between network functions")]
    GridMismatch,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("coefficient `{name}` uses variable `{variable}`, which it may not depend on")]
    ForbiddenVariable { name: String, variable: String },
    #[error("invalid control set: {0}")]
    InvalidControlSet(String),
    #[error("invalid problem data: {0}")]
    InvalidProblem(String),
    #[error("non-finite value produced by `{0}`")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("terminal data disagree at the vertex: T_1(0) = {first}, T_{ray}(0) = {other}")]
    VertexIncompatible { ray: usize, first: f64, other: f64 },
    #[error(
        "corner incompatibility on ray {ray}: lateral(K) = {lateral}, terminal(R) = {terminal}"
    )]
    CornerIncompatible {
        ray: usize,
        lateral: f64,
        terminal: f64,
    },
    #[error("singular tridiagonal system (zero pivot at row {0})")]
    Singular(usize),
    #[error(
        "policy iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("problem data depend on local time; l-independent mode needs l-free coefficients")]
    NotLIndependent,
    #[error("l-variation {variation:e} of the extracted slice exceeds tolerance {tolerance:e}")]
    LVariation { variation: f64, tolerance: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid test-function parameters: {0}")]
    InvalidSpec(String),
    #[error("smallness condition fails: 1 - |B| eps exp(|B| eps) = {0}")]
    SmallnessViolated(f64),
    #[error("kappa condition fails: value {0}")]
    KappaViolated(f64),
    #[error("shooting method failed: {0}")]
    Shooting(String),
    #[error("test-function ODE residual {0:e} exceeds tolerance")]
    OdeResidual(f64),
    #[error("spin weights sum to {0}, expected 1")]
    SpinNotNormalized(f64),
    #[error("invalid simulation parameters: {0}")]
    InvalidSimulation(String),
}
