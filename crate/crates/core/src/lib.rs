//! Numerical toolkit for nonautonomous Ornstein–Uhlenbeck equations
//!
//! ```text
//! dX = (A(t)X + f(t)) dt + B(t) dW
//! ```
//!
//! covering evolution families, Gaussian moment flows, evolution systems of
//! measures, the backward propagator `P_{s,t}`, a Monte Carlo oracle, weighted
//! Sobolev norms, the backward Cauchy solver and a verification suite.

pub mod benchmarks;
pub mod cauchy;
pub mod coeffs;
pub mod error;
pub mod evolution;
pub mod gaussian;
pub mod linalg;
pub mod measures;
pub mod model;
pub mod moments;
pub mod poly;
pub mod propagator;
pub mod sde;
pub mod spaces;
pub mod verify;

pub use error::{Error, Result};

/// Complex scalar used for characteristic functions and trigonometric test functions.
pub type C64 = nalgebra::Complex<f64>;
