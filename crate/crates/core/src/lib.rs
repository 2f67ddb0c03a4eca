//! Pseudo-spectral toolkit for three-dimensional periodic Navier–Stokes flow:
//! fields and exact spectral operators, velocity-gradient dynamics, pointwise
//! transport identities, an integrating-factor RK4 solver, statistical
//! diagnostics and Gaussian heat-kernel bounds.

pub mod error;
pub mod field;
pub mod dynvars;
pub mod identities;
pub mod evolution;
pub mod heatkernel;
pub mod stats;

pub use error::{Error, Result};
