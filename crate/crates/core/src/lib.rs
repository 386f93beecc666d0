//! Harmonic crystals on the lattice half-space with a Dirichlet wall.
//!
//! The crate builds interaction kernels and their spectral data, evolves
//! field states exactly in Fourier space, samples random initial ensembles,
//! and compares evolved covariances against the equilibrium limit.

pub mod covariance;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod fields;
pub mod lattice;
pub mod spectral;

pub use error::{CrystalError, Result};

/// Dense complex matrix used for symbols and spectral projections.
pub type CMat = nalgebra::DMatrix<num_complex::Complex64>;
