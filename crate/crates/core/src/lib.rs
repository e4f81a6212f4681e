//! Two-dimensional diffraction tomography: a multigrid-preconditioned
//! Helmholtz solver, a Lippmann-Schwinger baseline, analytic and dense
//! reference solutions, and total-variation regularised reconstruction.

pub mod error;
pub mod forward;
pub mod grid;
pub mod helmholtz;
pub mod inverse;
pub mod krylov;
pub mod lis;
pub mod multigrid;
pub mod oracle;
pub mod special;

pub use num_complex::Complex64;

pub use error::{Error, Result};
pub use forward::{
    forward_lis, forward_mgh, measure, plane_wave, sensor_green_operator, simulate_all, AcquisitionGeometry,
    HelmholtzModel, MeasurementSet, ModelKind, Scene, SensorOperator, SolverConfig,
};
pub use grid::{build_extended_grid, ComplexField2D, ExtendedGrid2D, Grid2D, RealField2D};
pub use helmholtz::{AblProfile, HelmholtzOperator};
pub use inverse::{
    data_fidelity, gradient_data_fidelity, reconstruct_fbs, select_subset, snr, tv_prox, tv_value, DataFidelity,
    HistoryEntry, Reconstruction, ReconstructionConfig, ReconstructionFailure, ReconstructionHistory, SplitMix64,
};
pub use krylov::{bicgstab, KrylovConfig, SolveReport};
pub use lis::{solve_lis, GreenKernel};
pub use multigrid::{MgConfig, MgHierarchy, WorkUnitMeter};
pub use oracle::{analytic_disk_field, dense_reference_solve, relative_error, DiskScene};
