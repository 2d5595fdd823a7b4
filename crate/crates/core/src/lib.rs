//! Excitation-independent nonlinear reduced-order models for aeroelastic
//! gust analysis.
//!
//! A full-order model implements [`model::Model`]. The [`nmor`] module
//! linearizes it at trim, selects an eigenvector basis, probes second and
//! third derivatives of the residual along that basis, and assembles a
//! [`nmor::RomModel`]. The [`sim`] module time-marches both, and [`sweep`]
//! runs worst-case gust searches over the gust gradient distance.

pub mod aerofoil;
pub mod config;
pub mod error;
pub mod gust;
pub mod model;
pub mod nmor;
pub mod sim;
pub mod sweep;
pub mod test_models;

pub use error::{Error, Result};
pub use model::{evaluate_residual, find_equilibrium, Equilibrium, Model, ModelDescriptor, StateVector};
