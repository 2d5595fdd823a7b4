//! Nonlinear model order reduction by eigenvector projection.

pub mod coeffs;
pub mod eigen;
pub mod io;
pub mod jacobian;
pub mod rom;

pub use coeffs::{compute_bilinear_coefficients, compute_trilinear_coefficients, Tensor3, Tensor4};
pub use eigen::{select_basis, select_basis_with_inputs, EigenBasis, SelectionCriteria};
pub use jacobian::{compute_gust_input_matrix, compute_jacobian, JacobianMatrix};
pub use rom::{assemble_rom, build_rom, check_rom_matches, reconstruct, project, RomBuild, RomBuildOptions, RomModel, RomSystem};
