//! Numerical workbench for transverse steady bifurcations of viscous shock
//! profiles on the strip `R x T`.
//!
//! The pipeline goes: viscous shock profile of a 2D conservation law with
//! Laplacian viscosity, Fourier-mode reduction in the periodic direction,
//! Dunford-integral spectral projections for the critical modes, a bordered
//! solve for the longitudinal (`k = 0`) mode, a contraction fixed point for
//! the high-mode tail, Lyapunov-Schmidt reduction to a scalar equation, and
//! finally continuation of the bifurcating branch with full-2D residual
//! certification.

pub mod bifurcation;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod operator;
pub mod reduction;
pub mod spectral;
pub mod strip;
pub mod zero_mode;

pub use error::{Error, Result};

/// Convenience alias used throughout the crate.
pub type C64 = num_complex::Complex<f64>;
