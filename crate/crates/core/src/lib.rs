//! Semi-Lagrangian solver for the 1D x 1V BGK relaxation model.
//!
//! One time step transports the distribution along backward characteristics
//! with linear interpolation in `x`, then relaxes it towards the local
//! Maxwellian built from the moments of the transported field:
//!
//! ```text
//! f^{n+1} = kappa/(kappa+dt) * f~^n + dt/(kappa+dt) * M(f~^n)
//! ```
//!
//! The relaxation is implicit in time but needs no solve, and the transport
//! carries no CFL restriction. Alongside the solver the crate provides the
//! runtime monitors and the convergence harness used to check it.

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod physics;
pub mod scheme;

pub use error::{Error, Result};
pub use field::{n_norms, weighted_l1_distance, DistributionField, FieldTable, NormReport};
pub use grid::{build_grid, wrap_periodic, GridSpec};
pub use physics::{compute_moments, discrete_maxwellian, maxwellian_value, CellFlag, MomentField};
pub use scheme::{init_field, reconstruct, run, step, InitialData, StepReport};
pub use harness::{
    cfl_sweep, error_vs_reference, fit_rate, reference_solution, scaling_study, validate_mesh, ConvergenceReport,
    MeshValidity, StudyOptions,
};
