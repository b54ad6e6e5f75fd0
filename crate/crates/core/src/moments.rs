//! Mean drift `g(t,s) = ∫ₛᵗ U(t,r)f(r)dr`, covariance `Q(t,s) = ∫ₛᵗ U(t,r)B(r)B(r)ᵀU(t,r)ᵀdr`
//! and their limits as `s → −∞`.

use crate::coeffs::CoefficientSystem;
use crate::error::{Error, Result};
use crate::evolution::{EvolutionCache, GrowthBound};
use crate::gaussian::GaussianMeasure;
use crate::linalg::{min_eigenvalue, psd_repair, spectral_norm, Mat, Vector};

/// Default tolerance on the truncated tail of the limit moments.
pub const DEFAULT_LIMIT_TOL: f64 = 1e-12;

/// Horizon cap in characteristic times `1/|ω|`.
pub const HORIZON_CAP: f64 = 200.0;

/// `g(t,s)` and `Q(t,s)`; `s = None` stands for `−∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub g: Vector,
    pub q: Mat,
    pub s: Option<f64>,
    pub t: f64,
    /// Truncation horizon used for `s = −∞`.
    pub horizon: Option<f64>,
    /// Bound on the discarded tail (zero for finite `s`).
    pub truncation_error: f64,
}

impl MomentPair {
    pub fn measure(&self) -> Result<GaussianMeasure> {
        GaussianMeasure::new(self.g.clone(), self.q.clone())
    }
}

/// Moments over `[s, t]` from the composed RK4 triples of the cache.
pub fn moment_pair(cache: &EvolutionCache, s: f64, t: f64) -> Result<MomentPair> {
    let flow = cache.flow(s, t)?;
    Ok(MomentPair {
        g: flow.g,
        q: psd_repair(&flow.q)?,
        s: Some(s),
        t,
        horizon: None,
        truncation_error: 0.0,
    })
}

/// Sampled suprema of `‖B Bᵀ‖` and `|f|` over `window`.
pub fn forcing_bounds(sys: &CoefficientSystem, window: (f64, f64)) -> Result<(f64, f64)> {
    let b = sys.coefficient_b().sup_norm(window.0, window.1, 400)?;
    let f = sys.coefficient_f().sup_norm(window.0, window.1, 400)?;
    Ok((b * b, f))
}

/// Tail bounds `(covariance, mean)` after truncating at horizon `tau`.
pub fn tail_bounds(growth: &GrowthBound, bbt_sup: f64, f_sup: f64, tau: f64) -> (f64, f64) {
    let w = growth.omega.abs();
    let m = growth.m;
    let cov = m * m * (2.0 * growth.omega * tau).exp() * bbt_sup / (2.0 * w);
    let mean = m * (growth.omega * tau).exp() * f_sup / w;
    (cov, mean)
}

/// Smallest horizon in the doubling sequence `1/|ω|, 2/|ω|, …` meeting `tol` for both tails.
///
/// Returns the horizon and the larger of the two tail bounds.
pub fn required_horizon(growth: &GrowthBound, bbt_sup: f64, f_sup: f64, tol: f64) -> Result<(f64, f64)> {
    if !growth.is_stable() {
        return Err(Error::NoLimit {
            omega: growth.omega,
        });
    }
    let w = growth.omega.abs();
    let cap = HORIZON_CAP / w;
    let mut tau = 1.0 / w;
    loop {
        let (cov, mean) = tail_bounds(growth, bbt_sup, f_sup, tau);
        let bound = cov.max(mean);
        if bound <= tol {
            return Ok((tau, bound));
        }
        if tau >= cap {
            return Err(Error::HorizonCap { cap, bound, tol });
        }
        tau = (2.0 * tau).min(cap);
    }
}

/// `g(t,−∞)` and `Q(t,−∞)` by truncation at the horizon from [`required_horizon`].
pub fn limit_moments(cache: &EvolutionCache, t: f64, tol: f64) -> Result<MomentPair> {
    let growth = cache.growth().ok_or(Error::MissingGrowth)?;
    if !growth.is_stable() {
        return Err(Error::NoLimit {
            omega: growth.omega,
        });
    }
    let (bbt, f) = forcing_bounds(cache.system(), cache.window())?;
    let (tau, bound) = required_horizon(&growth, bbt, f, tol)?;
    truncated_limit(cache, t, tau, bound)
}

/// Limit moments truncated at a precomputed horizon `tau` with tail bound `bound`.
pub fn truncated_limit(cache: &EvolutionCache, t: f64, tau: f64, bound: f64) -> Result<MomentPair> {
    let mut pair = moment_pair(cache, t - tau, t)?;
    pair.s = None;
    pair.horizon = Some(tau);
    pair.truncation_error = bound;
    Ok(pair)
}

/// `‖Q(t,s)^{−1/2}‖ = λ_min(Q(t,s))^{−1/2}`.
pub fn qinv_sqrt_norm(cache: &EvolutionCache, s: f64, t: f64) -> Result<f64> {
    if !(t > s) {
        return Err(Error::ArgumentOrder { s, t });
    }
    let q = moment_pair(cache, s, t)?.q;
    let min = min_eigenvalue(&q);
    if min <= 1e-13 * spectral_norm(&q) || min <= 0.0 {
        return Err(Error::Singular { min_eig: min });
    }
    Ok(1.0 / min.sqrt())
}
