//! A coefficient system bundled with an evolution cache that is long enough to
//! evaluate the canonical measures `ν_t = N(g(t,−∞), Q(t,−∞))` on a target window.

use std::sync::Arc;

use crate::coeffs::CoefficientSystem;
use crate::error::{Error, Result};
use crate::evolution::{default_step, EvolutionCache, Flow, GrowthBound, DEFAULT_GROWTH_PAIRS};
use crate::gaussian::GaussianMeasure;
use crate::linalg::Mat;
use crate::moments::{self, forcing_bounds, required_horizon, MomentPair, DEFAULT_LIMIT_TOL};

/// Construction options for [`OuModel`].
#[derive(Debug, Clone)]
pub struct ModelOptions {
    /// Grid step of the evolution cache (default `1e-3·min(1, 1/max‖A‖)`).
    pub step: Option<f64>,
    /// Tail tolerance for the limit moments.
    pub tol: f64,
    /// Length of the window used to fit the growth bound.
    pub probe_length: f64,
    pub growth_pairs: usize,
    /// Extra time kept before the window start (for entrance experiments).
    pub history: f64,
    /// Extra time kept after the window end (for forward shifts of the semigroup).
    pub future: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            step: None,
            tol: DEFAULT_LIMIT_TOL,
            probe_length: 40.0,
            growth_pairs: DEFAULT_GROWTH_PAIRS,
            history: 0.0,
            future: 0.0,
        }
    }
}

/// Margin added on both sides of the cached window.
const MARGIN: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct OuModel {
    cache: EvolutionCache,
    window: (f64, f64),
    /// Truncation horizon and its tail bound.
    horizon: Option<(f64, f64)>,
    tol: f64,
}

impl OuModel {
    pub fn new(sys: CoefficientSystem, window: (f64, f64), opts: &ModelOptions) -> Result<Self> {
        let (t1, t2) = window;
        if !(t2 >= t1) {
            return Err(Error::InvalidArgument(format!("empty window [{t1}, {t2}]")));
        }
        let sys = Arc::new(sys);
        let probe_len = match sys.period() {
            Some(p) => opts.probe_length.max(5.0 * p),
            None => opts.probe_length,
        };
        let mut probe_window = (t1 - probe_len, t1);
        if let Some((a, b)) = sys.hull() {
            probe_window = (a, b);
        }
        let probe_step = 10.0 * default_step(&sys, probe_window)?;
        let mut probe = EvolutionCache::build_shared(sys.clone(), probe_window, Some(probe_step))?;
        let growth = probe.estimate_growth_bound(opts.growth_pairs)?;

        let horizon = if growth.is_stable() {
            let (bbt, f) = forcing_bounds(&sys, probe_window)?;
            Some(required_horizon(&growth, bbt, f, opts.tol)?)
        } else {
            None
        };
        let mut lo = t1 - opts.history - MARGIN - horizon.map_or(0.0, |h| h.0);
        let mut hi = t2 + opts.future + MARGIN;
        if let Some((a, b)) = sys.hull() {
            lo = lo.max(a);
            hi = hi.min(b);
        }
        let mut cache = EvolutionCache::build_shared(sys, (lo, hi), opts.step)?;
        cache.set_growth(growth);
        Ok(Self {
            cache,
            window,
            horizon,
            tol: opts.tol,
        })
    }

    pub fn with_defaults(sys: CoefficientSystem, window: (f64, f64)) -> Result<Self> {
        Self::new(sys, window, &ModelOptions::default())
    }

    pub fn system(&self) -> &CoefficientSystem {
        self.cache.system()
    }

    pub fn cache(&self) -> &EvolutionCache {
        &self.cache
    }

    pub fn dim(&self) -> usize {
        self.cache.dim()
    }

    /// Target window `[T1, T2]`.
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn growth(&self) -> GrowthBound {
        self.cache.growth().expect("growth fitted at construction")
    }

    /// Truncation horizon of the limit moments, when the family is stable.
    pub fn horizon(&self) -> Option<f64> {
        self.horizon.map(|h| h.0)
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn flow(&self, s: f64, t: f64) -> Result<Flow> {
        self.cache.flow(s, t)
    }

    pub fn evolution_matrix(&self, s: f64, t: f64) -> Result<Mat> {
        self.cache.evolution_matrix(s, t)
    }

    pub fn moment_pair(&self, s: f64, t: f64) -> Result<MomentPair> {
        moments::moment_pair(&self.cache, s, t)
    }

    pub fn limit_moments(&self, t: f64) -> Result<MomentPair> {
        match self.horizon {
            Some((tau, bound)) => moments::truncated_limit(&self.cache, t, tau, bound),
            None => Err(Error::NoLimit {
                omega: self.growth().omega,
            }),
        }
    }

    /// Canonical measure `ν_t`.
    pub fn canonical(&self, t: f64) -> Result<GaussianMeasure> {
        self.limit_moments(t)?.measure()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn covers_window_with_horizon() {
        let m = OuModel::with_defaults(CoefficientSystem::scalar(-1.0, SQRT_2, 0.0), (0.0, 3.0)).unwrap();
        let (lo, hi) = m.cache().window();
        assert!(lo <= -m.horizon().unwrap() && hi >= 3.0);
        for t in [0.0, 1.5, 3.0] {
            let nu = m.canonical(t).unwrap();
            assert!((nu.cov()[(0, 0)] - 1.0).abs() < 1e-11);
            assert!(nu.mean()[0].abs() < 1e-14);
        }
    }

    #[test]
    fn unstable_model_has_no_canonical_measures() {
        let sys = CoefficientSystem::scalar(0.0, 1.0, 0.0);
        let m = OuModel::with_defaults(sys, (0.0, 1.0)).unwrap();
        assert!(m.horizon().is_none());
        assert!(matches!(m.canonical(0.5), Err(Error::NoLimit { .. })));
    }
}
