//! Numerical laboratory for Carleman estimates across a flat interface
//! separating two constant anisotropic media.
//!
//! The crate evaluates the per-frequency symbols of the conjugated operator,
//! checks the interface condition on the weight slopes, builds the explicit
//! quasi-mode that certifies failure when the condition is violated, and
//! measures the Carleman constant of a finite-difference discretization
//! through smallest-singular-value sweeps.
//!
//! Modules:
//! - [`symbols`]: exact scalar symbols, condition check, region labels.
//! - [`quasimode`]: violation points, quasi-mode evaluation and norms.
//! - [`discrete`]: per-frequency finite differences, singular-value sweeps,
//!   two-sided estimate evaluator, half-line factor identities.
//! - [`cli`]: configuration-driven experiment runner.

pub mod cli;
pub mod cutoff;
pub mod discrete;
pub mod error;
pub mod fit;
pub mod linalg;
pub mod parallel;
pub mod quadrature;
pub mod quasimode;
pub mod symbols;

pub use error::{LabError, Result};
pub use num_complex::Complex64;
