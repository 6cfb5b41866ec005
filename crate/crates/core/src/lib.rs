//! Shape reconstruction in two-dimensional electrical resistance tomography
//! by the kernel method: P1 finite elements on a disk, discrete
//! Neumann-to-Dirichlet maps, spectral analysis of their difference and
//! power-density thresholding.
//!
//! SI units throughout: meters, S/m, A/m for boundary current densities.

// `!(x >= 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod noise;
pub mod ntd;
pub mod phantom;
pub mod reconstruct;
pub mod spectral;
pub mod strategy;

pub use error::{Error, Result};
pub use fem::{
    fourier_current, power_density, power_in_region, solve_neumann, BoundaryCurrent, FemSolution, NeumannSolver, Phase,
    PowerDensityField,
};
pub use mesh::{generate_disk_mesh, mesh_diagnostics, Mesh, RegionIndicator};
pub use noise::{perturb, NoiseSpec, Perturbed};
pub use ntd::{assemble_ntd, assemble_ntd_with, difference_operator, BoundaryOperator, NtDMatrix, ZeroMeanBasis};
pub use phantom::{build_conductivity, truth_indicator, Anomaly, ConductivityField, PhantomSpec, Shape};
pub use reconstruct::{jaccard, run_kernel_method, solve_alpha, KernelConfig, ReconstructionResult};
pub use spectral::{eigendecompose, select_eigenindex, weyl_check, SpectralDecomposition};
pub use strategy::{Registry, SigmaBounds};
