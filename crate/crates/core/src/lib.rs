//! Forward solver, sensitivity analysis and one-step Bayesian inversion for
//! the smoothed weighted p-Laplace Neumann problem on the unit disk.
//!
//! The crate is organized around the pipeline
//! mesh/partition -> nonlinear forward solve -> boundary measurements ->
//! Jacobian assembly -> Gaussian prior -> one-step MAP reconstruction ->
//! experiment sweeps.

pub mod conductivity;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod measurement;
pub mod mesh;
pub mod partition;
pub mod prior;
pub mod reconstruct;
pub mod seed;
pub mod sensitivity;
pub mod solver;

pub use conductivity::{ConductivityField, Parametrization};
pub use energy::{grad_phi, hessian_phi, phi, verify_inequalities, EnergyParams, InequalityReport};
pub use fem::{BoundaryCurrent, CurrentKind, FemContext, NodalField};
pub use measurement::{
    add_noise, project_trace, simulate_measurement, trig_currents, MeasurementVector,
};
pub use mesh::{build_disk_mesh, perturb_mesh, MeshGeometry};
pub use partition::{build_partition, build_partition_auto, Partition};
pub use prior::{
    covariance_for_sample, covariance_matrix, lognormal_moments, sample_logconductivity,
    CovarianceModel, SampleId,
};
pub use reconstruct::{one_step_map, to_log_conductivity, LogConductivity, OneStepOperator};
pub use sensitivity::{assemble_jacobian, assemble_jacobians, solve_derivative, Eta, JacobianMatrix};
pub use solver::{energy as forward_energy, solve_forward, ForwardSolution, SolverOptions};
