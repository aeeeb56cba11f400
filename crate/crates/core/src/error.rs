//! Error types for the toolkit, one enum per subsystem.

use thiserror::Error;

/// Errors from the pointwise energy kernel.
#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("invalid energy parameters: p = {p} (need p > 1), tau = {tau} (need tau >= 0)")]
    InvalidParams { p: f64, tau: f64 },
    /// The Hessian formula is singular at the origin for tau = 0 unless p = 2.
    #[error("Hessian undefined at x = 0 with tau = 0 and p = {p}")]
    SingularPoint { p: f64 },
    #[error("inequality {name} violated at x = {x:?}, y = {y:?}, p = {p}, tau = {tau}: lhs = {lhs:.6e}, rhs = {rhs:.6e}")]
    InequalityViolation {
        name: &'static str,
        x: [f64; 2],
        y: [f64; 2],
        p: f64,
        tau: f64,
        lhs: f64,
        rhs: f64,
    },
}

/// Errors from mesh generation, partitioning and mesh I/O.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh generation failed: {0}")]
    GenerationFailure(String),
    #[error("partition failed: {0}")]
    PartitionFailure(String),
    #[error("bad mesh file at line {line}: {msg}")]
    InvalidFormat { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from the nonlinear forward solver and the linear derivative solves.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("objects refer to different meshes or partitions")]
    MeshMismatch,
    #[error("invalid boundary current: {0}")]
    InvalidCurrent(String),
    #[error("invalid conductivity: {0}")]
    InvalidConductivity(String),
    #[error("Newton iteration diverged after {steps} steps (relative residual {residual:.3e})")]
    NewtonDivergence { steps: usize, residual: f64 },
    #[error("tangent factorization failed (singular or indefinite system)")]
    SingularTangent,
}

/// Errors from the measurement model.
#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("aliasing: 2*j_max = {two_j_max} exceeds Nyquist margin for {boundary_nodes} boundary nodes")]
    Aliasing {
        two_j_max: usize,
        boundary_nodes: usize,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Errors from the Gaussian prior machinery.
#[derive(Debug, Error)]
pub enum PriorError {
    #[error("invalid prior hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("covariance factorization failed even after maximal diagonal jitter")]
    FactorizationFailure,
}

/// Errors from the one-step MAP reconstruction.
#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("regularized normal equations too ill-conditioned (estimate {estimate:.3e}); increase lambda")]
    IllConditioned { estimate: f64 },
    #[error("prior covariance factorization failed")]
    FactorizationFailure,
    #[error("invalid regularization parameter lambda = {0} (need lambda > 0)")]
    InvalidLambda(f64),
}

/// Errors from experiment orchestration.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("too many failed sample members: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("bad experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
