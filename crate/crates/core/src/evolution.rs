//! Evolution family `U(t,s)` of `∂ₜU = A(t)U`, together with the moment flows
//! `g(t,s)` and `Q(t,s)` that share its time grid.
//!
//! Each grid cell `[t_k, t_{k+1}]` stores the triple `(U, g, Q)` obtained by one
//! classical RK4 step of the joint system
//!
//! ```text
//! U' = A U,   g' = A g + f,   Q' = A Q + Q Aᵀ + B Bᵀ
//! ```
//!
//! started from `(I, 0, 0)`. Triples over adjacent intervals compose as
//! `(U₂,g₂,Q₂)∘(U₁,g₁,Q₁) = (U₂U₁, U₂g₁ + g₂, U₂Q₁U₂ᵀ + Q₂)`, so range products
//! are answered from a segment tree in `O(log N)` compositions.

use std::sync::Arc;

use crate::coeffs::CoefficientSystem;
use crate::error::{Error, Result};
use crate::linalg::{linear_fit, spectral_norm, symmetrize, Mat, Vector};

/// Norm above which a step is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Default number of sampled pairs for the growth fit.
pub const DEFAULT_GROWTH_PAIRS: usize = 64;

/// Fitted rate below which a family counts as exponentially stable.
pub const STABILITY_MARGIN: f64 = 1e-6;

/// Flow over an interval: evolution matrix, accumulated drift and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub u: Mat,
    pub g: Vector,
    pub q: Mat,
}

impl Flow {
    pub fn identity(n: usize) -> Self {
        Self {
            u: Mat::identity(n, n),
            g: Vector::zeros(n),
            q: Mat::zeros(n, n),
        }
    }

    /// Flow over `[r, t]` after `self` over `[s, r]`.
    pub fn then(&self, later: &Flow) -> Flow {
        let u2q = &later.u * &self.q;
        Flow {
            u: &later.u * &self.u,
            g: &later.u * &self.g + &later.g,
            q: u2q * later.u.transpose() + &later.q,
        }
    }
}

/// Fitted envelope `‖U(t,s)‖ ≲ M e^{ω(t−s)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthBound {
    pub m: f64,
    pub omega: f64,
    /// Fraction of sampled pairs above the envelope.
    pub violations: f64,
    pub pairs: usize,
}

impl GrowthBound {
    pub fn is_stable(&self) -> bool {
        self.omega < -STABILITY_MARGIN
    }
}

/// Grid-sampled evolution family with moment flows and growth metadata.
#[derive(Debug, Clone)]
pub struct EvolutionCache {
    sys: Arc<CoefficientSystem>,
    lo: f64,
    hi: f64,
    step: f64,
    cells: usize,
    /// Bottom-up segment tree; leaves at `cells..2*cells`.
    tree: Vec<Flow>,
    growth: Option<GrowthBound>,
}

/// Default grid step `1e-3·min(1, 1/max‖A‖)` over the window.
pub fn default_step(sys: &CoefficientSystem, window: (f64, f64)) -> Result<f64> {
    let amax = sys.coefficient_a().sup_norm(window.0, window.1, 200)?;
    Ok(1e-3 * if amax > 1.0 { 1.0 / amax } else { 1.0 })
}

fn derivative(a: &Mat, bbt: &Mat, f: &Vector, y: &Flow) -> Flow {
    let aq = a * &y.q;
    Flow {
        u: a * &y.u,
        g: a * &y.g + f,
        q: &aq + aq.transpose() + bbt,
    }
}

fn axpy(y: &Flow, k: &Flow, h: f64) -> Flow {
    Flow {
        u: &y.u + &k.u * h,
        g: &y.g + &k.g * h,
        q: &y.q + &k.q * h,
    }
}

struct Sample {
    a: Mat,
    bbt: Mat,
    f: Vector,
}

fn sample(sys: &CoefficientSystem, t: f64) -> Result<Sample> {
    let (a, b, f) = sys.eval(t)?;
    let bbt = &b * b.transpose();
    Ok(Sample { a, bbt, f })
}

fn rk4_with(n: usize, s0: &Sample, sm: &Sample, s1: &Sample, h: f64) -> Flow {
    let y0 = Flow {
        u: Mat::identity(n, n),
        g: Vector::zeros(n),
        q: Mat::zeros(n, n),
    };
    let k1 = derivative(&s0.a, &s0.bbt, &s0.f, &y0);
    let k2 = derivative(&sm.a, &sm.bbt, &sm.f, &axpy(&y0, &k1, 0.5 * h));
    let k3 = derivative(&sm.a, &sm.bbt, &sm.f, &axpy(&y0, &k2, 0.5 * h));
    let k4 = derivative(&s1.a, &s1.bbt, &s1.f, &axpy(&y0, &k3, h));
    let w = h / 6.0;
    Flow {
        u: y0.u + (k1.u + (k2.u + k3.u) * 2.0 + k4.u) * w,
        g: y0.g + (k1.g + (k2.g + k3.g) * 2.0 + k4.g) * w,
        q: symmetrize(&(y0.q + (k1.q + (k2.q + k3.q) * 2.0 + k4.q) * w)),
    }
}

/// One RK4 step of the joint system over `[t, t+h]` from `(I, 0, 0)`.
pub fn rk4_flow(sys: &CoefficientSystem, t: f64, h: f64) -> Result<Flow> {
    let s0 = sample(sys, t)?;
    let sm = sample(sys, t + 0.5 * h)?;
    let s1 = sample(sys, t + h)?;
    Ok(rk4_with(sys.dim(), &s0, &sm, &s1, h))
}

fn check_finite(flow: &Flow, from: f64, to: f64) -> Result<()> {
    let norm = flow.u.amax().max(flow.q.amax()).max(flow.g.amax());
    if !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(Error::Divergence { from, to, norm });
    }
    Ok(())
}

impl EvolutionCache {
    /// Builds the cache on `window` with grid step `step` (default from [`default_step`]).
    ///
    /// The step is shrunk so that the grid hits both window ends.
    pub fn build(sys: &CoefficientSystem, window: (f64, f64), step: Option<f64>) -> Result<Self> {
        Self::build_shared(Arc::new(sys.clone()), window, step)
    }

    pub fn build_shared(
        sys: Arc<CoefficientSystem>,
        window: (f64, f64),
        step: Option<f64>,
    ) -> Result<Self> {
        let (lo, hi) = window;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidArgument(format!("empty window [{lo}, {hi}]")));
        }
        if let Some((a, b)) = sys.hull() {
            if lo < a || hi > b {
                let t = if lo < a { lo } else { hi };
                return Err(Error::OutOfRange { t, lo: a, hi: b });
            }
        }
        let h = match step {
            Some(h) if h > 0.0 && h.is_finite() => h,
            Some(h) => return Err(Error::InvalidArgument(format!("grid step must be positive, got {h}"))),
            None => default_step(&sys, window)?,
        };
        let cells = ((hi - lo) / h).ceil().max(1.0) as usize;
        let h = (hi - lo) / cells as f64;
        let n = sys.dim();
        let mut tree = vec![Flow::identity(0); 2 * cells];
        let time = |k: usize| if k == cells { hi } else { lo + k as f64 * h };
        let mut left = sample(&sys, lo)?;
        for k in 0..cells {
            let (t0, t1) = (time(k), time(k + 1));
            let mid = sample(&sys, 0.5 * (t0 + t1))?;
            let right = sample(&sys, t1)?;
            let flow = rk4_with(n, &left, &mid, &right, t1 - t0);
            check_finite(&flow, t0, t1)?;
            tree[cells + k] = flow;
            left = right;
        }
        for i in (1..cells).rev() {
            tree[i] = tree[2 * i].then(&tree[2 * i + 1]);
        }
        Ok(Self {
            sys,
            lo,
            hi,
            step: h,
            cells,
            tree,
            growth: None,
        })
    }

    pub fn system(&self) -> &CoefficientSystem {
        &self.sys
    }

    pub fn shared_system(&self) -> Arc<CoefficientSystem> {
        self.sys.clone()
    }

    pub fn dim(&self) -> usize {
        self.sys.dim()
    }

    pub fn window(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn growth(&self) -> Option<GrowthBound> {
        self.growth
    }

    pub fn set_growth(&mut self, growth: GrowthBound) {
        self.growth = Some(growth);
    }

    fn grid_time(&self, k: usize) -> f64 {
        if k == self.cells {
            self.hi
        } else {
            self.lo + k as f64 * self.step
        }
    }

    /// Index `k` with `t = t_k` up to rounding, if any.
    fn snap(&self, t: f64) -> Option<usize> {
        let x = (t - self.lo) / self.step;
        let k = x.round();
        ((x - k).abs() <= 1e-9 && k >= 0.0 && k <= self.cells as f64).then_some(k as usize)
    }

    fn check_range(&self, s: f64, t: f64) -> Result<()> {
        if !(s <= t) {
            return Err(Error::ArgumentOrder { s, t });
        }
        for x in [s, t] {
            if !(x >= self.lo - 1e-12 * self.step && x <= self.hi + 1e-12 * self.step) {
                return Err(Error::OutOfRange {
                    t: x,
                    lo: self.lo,
                    hi: self.hi,
                });
            }
        }
        Ok(())
    }

    /// Product of the stored cells `a..b`, in time order.
    fn cell_product(&self, a: usize, b: usize) -> Option<Flow> {
        let mut l = a + self.cells;
        let mut r = b + self.cells;
        let mut left: Option<Flow> = None;
        let mut right: Option<Flow> = None;
        while l < r {
            if l & 1 == 1 {
                left = Some(match left {
                    None => self.tree[l].clone(),
                    Some(acc) => acc.then(&self.tree[l]),
                });
                l += 1;
            }
            if r & 1 == 1 {
                r -= 1;
                right = Some(match right {
                    None => self.tree[r].clone(),
                    Some(acc) => self.tree[r].then(&acc),
                });
            }
            l >>= 1;
            r >>= 1;
        }
        match (left, right) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => Some(a.then(&b)),
        }
    }

    /// The triple `(U(t,s), g(t,s), Q(t,s))` for `s ≤ t` inside the window.
    pub fn flow(&self, s: f64, t: f64) -> Result<Flow> {
        self.check_range(s, t)?;
        let n = self.dim();
        if s == t {
            return Ok(Flow::identity(n));
        }
        let s = s.clamp(self.lo, self.hi);
        let t = t.clamp(self.lo, self.hi);
        // first grid point at or after s, last at or before t
        let (ks, head) = match self.snap(s) {
            Some(k) => (k, None),
            None => {
                let k = ((s - self.lo) / self.step).ceil() as usize;
                (k.min(self.cells), Some(k.min(self.cells)))
            }
        };
        let (kt, tail) = match self.snap(t) {
            Some(k) => (k, None),
            None => {
                let k = ((t - self.lo) / self.step).floor() as usize;
                (k.min(self.cells), Some(k.min(self.cells)))
            }
        };
        if ks > kt {
            // s and t inside one cell
            return rk4_flow(&self.sys, s, t - s);
        }
        let mut acc: Option<Flow> = None;
        if let Some(k) = head {
            acc = Some(rk4_flow(&self.sys, s, self.grid_time(k) - s)?);
        }
        if let Some(body) = self.cell_product(ks, kt) {
            acc = Some(match acc {
                None => body,
                Some(a) => a.then(&body),
            });
        }
        if let Some(k) = tail {
            let piece = rk4_flow(&self.sys, self.grid_time(k), t - self.grid_time(k))?;
            acc = Some(match acc {
                None => piece,
                Some(a) => a.then(&piece),
            });
        }
        Ok(acc.unwrap_or_else(|| Flow::identity(n)))
    }

    /// `U(t,s)` for `s ≤ t`; the adjoint `U*(t,s)` is its transpose.
    pub fn evolution_matrix(&self, s: f64, t: f64) -> Result<Mat> {
        Ok(self.flow(s, t)?.u)
    }

    /// Fits `log‖U(t,s)‖ ≈ log M + ω(t−s)` over `sample_pairs` pairs spread over the window.
    ///
    /// The slope is a least-squares fit; `log M` is raised to the largest residual so the
    /// result is an envelope of the samples. The result is stored in the cache.
    pub fn estimate_growth_bound(&mut self, sample_pairs: usize) -> Result<GrowthBound> {
        let growth = self.fit_growth(sample_pairs)?;
        self.growth = Some(growth);
        Ok(growth)
    }

    fn fit_growth(&self, sample_pairs: usize) -> Result<GrowthBound> {
        let len = self.hi - self.lo;
        let count = sample_pairs.max(2);
        let mut gaps = Vec::with_capacity(count);
        let mut logs = Vec::with_capacity(count);
        for i in 0..count {
            let gap = len * (0.1 + 0.9 * i as f64 / (count - 1) as f64);
            // low-discrepancy start points
            let frac = (i as f64 * 0.618_033_988_749_895).fract();
            let s = self.lo + frac * (len - gap);
            let t = (s + gap).min(self.hi);
            let norm = spectral_norm(&self.evolution_matrix(s, t)?);
            if norm.is_finite() && norm > 0.0 {
                gaps.push(t - s);
                logs.push(norm.ln());
            }
        }
        if gaps.len() < 8 {
            return Err(Error::InsufficientData(format!(
                "{} usable pairs for the growth fit, need at least 8",
                gaps.len()
            )));
        }
        let (omega, _, _) = linear_fit(&gaps, &logs);
        let log_m = gaps
            .iter()
            .zip(&logs)
            .map(|(x, y)| y - omega * x)
            .fold(f64::NEG_INFINITY, f64::max);
        let m = log_m.exp();
        let violations = gaps
            .iter()
            .zip(&logs)
            .filter(|(x, y)| **y > log_m + omega * **x + 1e-12)
            .count() as f64
            / gaps.len() as f64;
        Ok(GrowthBound {
            m,
            omega,
            violations,
            pairs: gaps.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::Coefficient;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn periodic_a() -> CoefficientSystem {
        CoefficientSystem::new(
            Coefficient::Periodic {
                base: Mat::from_element(1, 1, -1.0),
                sin_amp: vec![Mat::from_element(1, 1, -0.5)],
                cos_amp: vec![],
                period: TAU,
            },
            Coefficient::Constant(Mat::from_element(1, 1, 1.0)),
            Coefficient::Constant(Mat::zeros(1, 1)),
        )
        .unwrap()
    }

    fn constant(a: &[f64], n: usize) -> CoefficientSystem {
        CoefficientSystem::constant(
            Mat::from_row_slice(n, n, a),
            Mat::identity(n, n),
            Vector::zeros(n),
        )
        .unwrap()
    }

    /// `U(t,0)` for `A(t) = −1 − 0.5 sin t`: `exp(−t + 0.5(cos t − 1))`.
    fn periodic_exact(t: f64) -> f64 {
        (-t + 0.5 * (t.cos() - 1.0)).exp()
    }

    #[test]
    fn scalar_decay_matches_exponential() {
        let sys = CoefficientSystem::scalar(-1.0, 1.0, 0.0);
        let cache = EvolutionCache::build(&sys, (0.0, 2.0), Some(1e-3)).unwrap();
        let u = cache.evolution_matrix(0.0, 1.0).unwrap()[(0, 0)];
        assert!((u - (-1.0f64).exp()).abs() <= 1e-10);
        assert_eq!(cache.evolution_matrix(0.3, 0.3).unwrap(), Mat::identity(1, 1));
    }

    #[test]
    fn periodic_full_turn() {
        let cache = EvolutionCache::build(&periodic_a(), (0.0, 7.0), None).unwrap();
        let u = cache.evolution_matrix(0.0, TAU).unwrap()[(0, 0)];
        assert!((u - 0.001_867_442_731_707_988).abs() < 1e-12);
        let u1 = cache.evolution_matrix(0.0, 1.0).unwrap()[(0, 0)];
        assert!(((u1 - periodic_exact(1.0)) / periodic_exact(1.0)).abs() < 1e-8);
    }

    #[test]
    fn rotation_is_exact_rotation() {
        let sys = constant(&[0.0, 1.0, -1.0, 0.0], 2);
        let cache = EvolutionCache::build(&sys, (0.0, 5.0), None).unwrap();
        let u = cache.evolution_matrix(0.5, 3.2).unwrap();
        let d = 2.7f64;
        let r = Mat::from_row_slice(2, 2, &[d.cos(), d.sin(), -d.sin(), d.cos()]);
        assert!((u - r).norm() < 1e-11);
    }

    #[test]
    fn rejects_reversed_arguments() {
        let sys = CoefficientSystem::scalar(-1.0, 1.0, 0.0);
        let cache = EvolutionCache::build(&sys, (0.0, 1.0), None).unwrap();
        assert!(matches!(
            cache.evolution_matrix(0.7, 0.2),
            Err(Error::ArgumentOrder { .. })
        ));
        assert!(matches!(
            cache.evolution_matrix(0.2, 1.7),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn divergent_step_is_reported() {
        let sys = CoefficientSystem::scalar(5000.0, 1.0, 0.0);
        match EvolutionCache::build(&sys, (0.0, 1.0), Some(1.0)) {
            Err(Error::Divergence { from, to, .. }) => assert_eq!((from, to), (0.0, 1.0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let sys = periodic_a();
        let exact = periodic_exact(3.0);
        let err = |h: f64| {
            let c = EvolutionCache::build(&sys, (0.0, 3.0), Some(h)).unwrap();
            (c.evolution_matrix(0.0, 3.0).unwrap()[(0, 0)] - exact).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn growth_of_scalar_decay() {
        let sys = CoefficientSystem::scalar(-1.0, 1.0, 0.0);
        let mut cache = EvolutionCache::build(&sys, (0.0, 20.0), None).unwrap();
        let g = cache.estimate_growth_bound(DEFAULT_GROWTH_PAIRS).unwrap();
        assert!((g.omega + 1.0).abs() < 0.02);
        assert!((g.m - 1.0).abs() < 1e-6);
        assert!(g.is_stable());
    }

    #[test]
    fn growth_with_transient_amplification() {
        let sys = constant(&[-1.0, 10.0, 0.0, -1.0], 2);
        let mut cache = EvolutionCache::build(&sys, (0.0, 40.0), Some(2e-3)).unwrap();
        let g = cache.estimate_growth_bound(DEFAULT_GROWTH_PAIRS).unwrap();
        assert!((g.omega + 1.0).abs() < 0.1, "omega {}", g.omega);
        assert!(g.m > 1.0);
        // envelope against the closed form e^{−τ}‖[[1, 10τ],[0, 1]]‖
        for i in 1..40 {
            let tau = i as f64;
            let exact = (-tau).exp()
                * spectral_norm(&Mat::from_row_slice(2, 2, &[1.0, 10.0 * tau, 0.0, 1.0]));
            assert!(exact <= g.m * (g.omega * tau).exp() * 1.05);
        }
    }

    #[test]
    fn rotation_is_not_stable() {
        let sys = constant(&[0.0, 1.0, -1.0, 0.0], 2);
        let mut cache = EvolutionCache::build(&sys, (0.0, 20.0), None).unwrap();
        let g = cache.estimate_growth_bound(DEFAULT_GROWTH_PAIRS).unwrap();
        assert!(g.omega.abs() < 1e-6);
        assert!(!g.is_stable());
    }

    #[test]
    fn too_few_pairs() {
        let sys = CoefficientSystem::scalar(-1.0, 1.0, 0.0);
        let mut cache = EvolutionCache::build(&sys, (0.0, 10.0), None).unwrap();
        assert!(matches!(
            cache.estimate_growth_bound(5),
            Err(Error::InsufficientData(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn composition_and_liouville(a in 0.0f64..8.0, b in 0.0f64..8.0, c in 0.0f64..8.0) {
            let sys = CoefficientSystem::new(
                Coefficient::Periodic {
                    base: Mat::from_row_slice(2, 2, &[-1.0, 0.3, -0.2, -0.8]),
                    sin_amp: vec![Mat::from_row_slice(2, 2, &[0.4, 0.0, 0.1, -0.3])],
                    cos_amp: vec![],
                    period: 3.0,
                },
                Coefficient::Constant(Mat::identity(2, 2)),
                Coefficient::Constant(Mat::zeros(2, 1)),
            ).unwrap();
            let cache = EvolutionCache::build(&sys, (0.0, 8.0), Some(1e-2)).unwrap();
            let mut v = [a, b, c];
            v.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let grid = v.map(|x| (x * 100.0).round() / 100.0);
            let [s, r, t] = grid;
            let direct = cache.evolution_matrix(s, t).unwrap();
            let split = cache.evolution_matrix(r, t).unwrap() * cache.evolution_matrix(s, r).unwrap();
            prop_assert!((&direct - split).norm() <= 1e-13 * direct.norm().max(1.0));
            prop_assert!(direct.determinant() > 0.0);
            // off-grid endpoints agree up to the integrator's truncation error
            let [s, r, t] = v;
            let direct = cache.evolution_matrix(s, t).unwrap();
            let split = cache.evolution_matrix(r, t).unwrap() * cache.evolution_matrix(s, r).unwrap();
            prop_assert!((&direct - split).norm() <= 1e-9 * direct.norm().max(1.0));
        }
    }
}
