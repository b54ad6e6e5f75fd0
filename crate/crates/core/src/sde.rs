//! Monte Carlo oracle: Euler–Maruyama paths of `dX = (A(t)X + f(t))dt + B(t)dW`,
//! exact Gaussian terminal samples, and the statistics used to compare them.
//!
//! Path `j` draws its noise from the ChaCha8 stream `j` of the seed, so ensembles are
//! reproducible regardless of how paths are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coeffs::CoefficientSystem;
use crate::error::{Error, Result};
use crate::evolution::EvolutionCache;
use crate::gaussian::GaussianMeasure;
use crate::linalg::Vector;
use crate::propagator::TestFunction;
use crate::C64;

/// Paths whose state exceeds this norm abort the simulation.
pub const PATH_DIVERGENCE: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub samples: Vec<Vector>,
    /// Euler–Maruyama step; the full gap `t − s` for exact samples.
    pub dt: f64,
    pub seed: u64,
    pub start: (f64, Vector),
    pub end: f64,
}

impl PathEnsemble {
    pub fn paths(&self) -> usize {
        self.samples.len()
    }

    /// Sample mean and covariance.
    pub fn moments(&self) -> (Vector, crate::linalg::Mat) {
        let n = self.start.1.len();
        let k = self.samples.len() as f64;
        let mut mean = Vector::zeros(n);
        for x in &self.samples {
            mean += x;
        }
        mean /= k;
        let mut cov = crate::linalg::Mat::zeros(n, n);
        for x in &self.samples {
            let d = x - &mean;
            cov += &d * d.transpose();
        }
        cov /= (k - 1.0).max(1.0);
        (mean, cov)
    }

    /// Coordinate `i` of every sample.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|x| x[i]).collect()
    }
}

/// Noise generator of path `path`.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

struct Schedule {
    /// `(step, A, B, f)` row-major.
    steps: Vec<(f64, Vec<f64>, Vec<f64>, Vec<f64>)>,
}

fn schedule(sys: &CoefficientSystem, s: f64, t: f64, dt: f64) -> Result<Schedule> {
    if s > t {
        return Err(Error::ArgumentOrder { s, t });
    }
    if t > s && !(dt > 0.0 && dt <= (t - s) * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!("step {dt} must lie in (0, {}]", t - s)));
    }
    let mut steps = Vec::new();
    let mut time = s;
    let full = if t > s { ((t - s) / dt + 1e-9).floor() as usize } else { 0 };
    let row_major = |m: &crate::linalg::Mat| -> Vec<f64> {
        let mut v = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                v.push(m[(i, j)]);
            }
        }
        v
    };
    for j in 0..=full {
        let h = if j < full { dt } else { t - time };
        if h <= 1e-12 * dt.max(1e-300) {
            break;
        }
        let (a, b, f) = sys.eval(time)?;
        steps.push((h, row_major(&a), row_major(&b), f.iter().cloned().collect()));
        time = if j + 1 < full { s + (j + 1) as f64 * dt } else if j < full { s + full as f64 * dt } else { t };
    }
    Ok(Schedule { steps })
}

/// Runs `k` Euler–Maruyama paths and hands each terminal state to `visit`.
pub fn simulate_with(
    sys: &CoefficientSystem,
    s: f64,
    t: f64,
    x: &Vector,
    k: usize,
    dt: f64,
    seed: u64,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let n = sys.dim();
    if x.len() != n {
        return Err(Error::Dimension(format!("start point of length {} in dimension {n}", x.len())));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("at least one path is required".into()));
    }
    let sched = schedule(sys, s, t, dt)?;
    let mut state = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut noise = vec![0.0; n];
    for path in 0..k {
        let mut rng = path_rng(seed, path);
        state.copy_from_slice(x.as_slice());
        for (h, a, b, f) in &sched.steps {
            let sq = h.sqrt();
            for z in noise.iter_mut() {
                *z = StandardNormal.sample(&mut rng);
            }
            for i in 0..n {
                let mut drift = f[i];
                let mut diffusion = 0.0;
                for j in 0..n {
                    drift += a[i * n + j] * state[j];
                    diffusion += b[i * n + j] * noise[j];
                }
                next[i] = state[i] + drift * h + diffusion * sq;
            }
            std::mem::swap(&mut state, &mut next);
            let norm = state.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm <= PATH_DIVERGENCE) {
                return Err(Error::PathDivergence { path, norm });
            }
        }
        visit(path, &state);
    }
    Ok(())
}

/// Terminal states of `k` Euler–Maruyama paths started at `(s, x)`.
pub fn simulate_paths(
    sys: &CoefficientSystem,
    s: f64,
    t: f64,
    x: &Vector,
    k: usize,
    dt: f64,
    seed: u64,
) -> Result<PathEnsemble> {
    let mut samples = Vec::with_capacity(k);
    simulate_with(sys, s, t, x, k, dt, seed, |_, v| samples.push(Vector::from_column_slice(v)))?;
    Ok(PathEnsemble {
        samples,
        dt,
        seed,
        start: (s, x.clone()),
        end: t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: C64,
    /// Sample standard deviation over `√k`.
    pub stderr: f64,
    pub paths: usize,
    pub dt: f64,
}

/// Monte Carlo estimate of `E φ(X(t; s, x))`.
#[allow(clippy::too_many_arguments)]
pub fn mc_expectation(
    sys: &CoefficientSystem,
    s: f64,
    t: f64,
    x: &Vector,
    phi: &TestFunction,
    k: usize,
    dt: f64,
    seed: u64,
) -> Result<McEstimate> {
    let n = sys.dim();
    if phi.dim() != n {
        return Err(Error::Dimension("test function and system dimensions differ".into()));
    }
    let mut sum = C64::new(0.0, 0.0);
    let mut sum_sq = 0.0;
    let mut buf = Vector::zeros(n);
    simulate_with(sys, s, t, x, k, dt, seed, |_, v| {
        buf.copy_from_slice(v);
        let y = phi.eval(&buf);
        sum += y;
        sum_sq += y.norm_sqr();
    })?;
    let kf = k as f64;
    let mean = sum / kf;
    let var = if k > 1 {
        ((sum_sq - kf * mean.norm_sqr()) / (kf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        stderr: (var / kf).sqrt(),
        paths: k,
        dt,
    })
}

/// Direct samples of `N(U(t,s)x + g(t,s), Q(t,s))`.
pub fn exact_terminal_sample(cache: &EvolutionCache, s: f64, t: f64, x: &Vector, k: usize, seed: u64) -> Result<PathEnsemble> {
    let flow = cache.flow(s, t)?;
    let law = GaussianMeasure::new(&flow.u * x + &flow.g, flow.q)?;
    Ok(PathEnsemble {
        samples: law.sample(seed, k),
        dt: t - s,
        seed,
        start: (s, x.clone()),
        end: t,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic 1% critical value of the two-sample statistic.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.628 * ((n + m) / (n * m)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakErrorFit {
    /// Signed `C` in `mean − reference ≈ C·dt`.
    pub constant: f64,
    /// `(dt, mean − reference, stderr)` rows.
    pub rows: Vec<(f64, f64, f64)>,
}

impl WeakErrorFit {
    pub fn bias(&self, dt: f64) -> f64 {
        self.constant.abs() * dt
    }
}

/// Fits the first-order weak error of the real part of `φ` against `reference`.
#[allow(clippy::too_many_arguments)]
pub fn fit_weak_error(
    sys: &CoefficientSystem,
    s: f64,
    t: f64,
    x: &Vector,
    phi: &TestFunction,
    reference: f64,
    k: usize,
    dts: &[f64],
    seed: u64,
) -> Result<WeakErrorFit> {
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        let est = mc_expectation(sys, s, t, x, phi, k, dt.min(t - s), seed)?;
        rows.push((dt, est.mean.re - reference, est.stderr));
    }
    let num: f64 = rows.iter().map(|(dt, e, _)| dt * e).sum();
    let den: f64 = rows.iter().map(|(dt, _, _)| dt * dt).sum();
    Ok(WeakErrorFit {
        constant: if den > 0.0 { num / den } else { 0.0 },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_poly;
    use std::f64::consts::SQRT_2;

    fn v1(x: f64) -> Vector {
        Vector::from_vec(vec![x])
    }

    #[test]
    fn noiseless_paths_follow_the_flow() {
        let sys = CoefficientSystem::scalar(-1.0, 0.0, 0.0);
        let e = simulate_paths(&sys, 0.0, 1.0, &v1(2.0), 3, 1e-3, 1).unwrap();
        let exact = 2.0 * (-1f64).exp();
        for x in &e.samples {
            assert!(((x[0] - exact) / exact).abs() < 1e-3);
        }
        let same = simulate_paths(&sys, 0.5, 0.5, &v1(2.0), 4, 0.1, 1).unwrap();
        assert!(same.samples.iter().all(|x| x[0] == 2.0));
    }

    #[test]
    fn partial_final_step_lands_on_end() {
        let sys = CoefficientSystem::scalar(1.0, 0.0, 0.0);
        let e = simulate_paths(&sys, 0.0, 0.25, &v1(1.0), 1, 0.1, 0).unwrap();
        // 1.1 · 1.1 · 1.05
        assert!((e.samples[0][0] - 1.1 * 1.1 * 1.05).abs() < 1e-14);
    }

    #[test]
    fn seed_determinism_and_streams() {
        let sys = CoefficientSystem::scalar(-1.0, SQRT_2, 0.0);
        let a = simulate_paths(&sys, 0.0, 0.3, &v1(0.0), 50, 0.01, 9).unwrap();
        let b = simulate_paths(&sys, 0.0, 0.3, &v1(0.0), 50, 0.01, 9).unwrap();
        assert_eq!(a, b);
        // path j does not depend on how many paths run
        let c = simulate_paths(&sys, 0.0, 0.3, &v1(0.0), 10, 0.01, 9).unwrap();
        assert_eq!(a.samples[..10], c.samples[..]);
    }

    #[test]
    fn moments_of_linear_and_constant_functions() {
        let sys = CoefficientSystem::scalar(-1.0, SQRT_2, 0.0);
        let c = mc_expectation(&sys, 0.0, 1.0, &v1(0.3), &TestFunction::constant(1, 2.5), 100, 0.01, 3).unwrap();
        assert_eq!(c.mean.re, 2.5);
        assert!(c.stderr < 1e-12);
        let x = TestFunction::polynomial(parse_poly("x", 1).unwrap()).unwrap();
        let est = mc_expectation(&sys, 0.0, 1.0, &v1(1.0), &x, 20000, 0.01, 4).unwrap();
        assert!((est.mean.re - (-1f64).exp()).abs() <= 4.0 * est.stderr);
    }

    #[test]
    fn divergence_reports_path() {
        let sys = CoefficientSystem::scalar(100.0, 0.0, 0.0);
        assert!(matches!(
            simulate_paths(&sys, 0.0, 10.0, &v1(1.0), 2, 0.1, 0),
            Err(Error::PathDivergence { path: 0, .. })
        ));
    }

    #[test]
    fn exact_samples() {
        let sys = CoefficientSystem::scalar(-1.0, 0.0, 0.5);
        let cache = EvolutionCache::build(&sys, (0.0, 2.0), None).unwrap();
        let e = exact_terminal_sample(&cache, 0.0, 1.0, &v1(1.0), 5, 1).unwrap();
        let point = (-1f64).exp() + 0.5 * (1.0 - (-1f64).exp());
        assert!(e.samples.iter().all(|x| (x[0] - point).abs() < 1e-10));

        let sys = CoefficientSystem::scalar(-1.0, SQRT_2, 0.5);
        let cache = EvolutionCache::build(&sys, (0.0, 2.0), None).unwrap();
        let e = exact_terminal_sample(&cache, 0.0, 1.0, &v1(1.0), 40000, 2).unwrap();
        let (mean, cov) = e.moments();
        let sigma = (1.0 - (-2f64).exp()).sqrt();
        assert!((mean[0] - point).abs() <= 4.0 * sigma / 200.0);
        assert!((cov[(0, 0)] - sigma * sigma).abs() < 0.03);
    }

    #[test]
    fn ks_statistic_basics() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_statistic(&a, &a), 0.0);
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 1000.0).collect();
        assert_eq!(ks_statistic(&a, &b), 1.0);
        let c: Vec<f64> = (0..100).map(|i| i as f64 + 10.0).collect();
        assert!((ks_statistic(&a, &c) - 0.1).abs() < 1e-12);
        assert!((ks_critical_1pct(100, 100) - 1.628 * 0.02f64.sqrt()).abs() < 1e-15);
    }
}
