//! Reconstruction of 3D point-source density maps from 2D projections at
//! unknown orientations.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`forward`] simulates noisy projections of a Gaussian-source
//!    [`model::PointSourceModel`] at Haar-random orientations.
//! 2. [`polar`] and [`features`] average each image's polar Fourier
//!    transform into rotation-invariant radial curves `B1(k)`, `B2(k)`, and
//!    sine-transform them into the mean feature `mu(t)` (mass on spheres of
//!    radius `t`) and the autocorrelation feature `C(t)` (autocorrelation
//!    mass on spheres).
//! 3. [`recon`] voxelizes the support, matches `C` with a quadratic form per
//!    distance bin under per-shell mass constraints from `mu`, and solves by
//!    projected gradient descent from a spectral start.
//! 4. [`eval`] aligns recovered centers to the truth over O(3) and point
//!    permutations and reports the RMSD.

pub mod ablation;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod forward;
pub mod io;
pub mod model;
pub mod nufft;
pub mod polar;
pub mod quadrature;
pub mod recon;
pub mod rng;

pub use error::{Error, Result};
