//! Reference systems used throughout the tests and the verification suite.

use std::f64::consts::{PI, SQRT_2};

use crate::coeffs::{Coefficient, CoefficientSystem};
use crate::linalg::Mat;

/// `dX = −X dt + √2 dW`, with standard normal invariant law.
pub fn autonomous_scalar() -> CoefficientSystem {
    CoefficientSystem::scalar(-1.0, SQRT_2, 0.0)
}

/// `dX = (−(1 + ½ sin t)X + 0.3 cos t) dt + dW`, period `2π`.
pub fn periodic_scalar() -> CoefficientSystem {
    let m = |x: f64| Mat::from_element(1, 1, x);
    let a = Coefficient::Periodic {
        base: m(-1.0),
        sin_amp: vec![m(-0.5)],
        cos_amp: vec![],
        period: 2.0 * PI,
    };
    let f = Coefficient::Periodic {
        base: m(0.0),
        sin_amp: vec![],
        cos_amp: vec![m(0.3)],
        period: 2.0 * PI,
    };
    CoefficientSystem::new(a, Coefficient::Constant(m(1.0)), f).expect("benchmark system is valid")
}
