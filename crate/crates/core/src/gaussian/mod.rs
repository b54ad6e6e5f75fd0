//! Gaussian measures `N(m, Q)` on `ℝⁿ`: density, characteristic function,
//! convolution, sampling and tensor Gauss–Hermite expectations.

pub mod quadrature;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{pivoted_cholesky, psd_repair, Mat, Vector};
use crate::C64;

pub use quadrature::{hermite_rule, HermiteRule, QuadratureRule, NODE_BUDGET};

/// Default points per axis for smooth integrands.
pub const SMOOTH_LEVEL: usize = 20;
/// Default points per axis for oscillatory integrands.
pub const OSCILLATORY_LEVEL: usize = 40;

/// Gaussian measure with mean `m` and positive semidefinite covariance `Q = LLᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: Vector,
    cov: Mat,
    factor: Mat,
    rank: usize,
}

impl GaussianMeasure {
    /// Builds `N(mean, cov)`; the covariance is symmetrized and tiny negative eigenvalues clamped.
    pub fn new(mean: Vector, cov: Mat) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean of length {} with covariance {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let cov = psd_repair(&cov)?;
        let (factor, rank) = pivoted_cholesky(&cov);
        Ok(Self {
            mean,
            cov,
            factor,
            rank,
        })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(Vector::zeros(dim), Mat::identity(dim, dim)).expect("identity covariance")
    }

    /// Point mass `δ_x`.
    pub fn dirac(x: Vector) -> Self {
        let n = x.len();
        Self::new(x, Mat::zeros(n, n)).expect("zero covariance")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &Mat {
        &self.cov
    }

    /// Pivoted Cholesky factor `L` (columns past the rank are zero).
    pub fn factor(&self) -> &Mat {
        &self.factor
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Lebesgue density; fails for singular covariance.
    pub fn density(&self, y: &Vector) -> Result<f64> {
        let n = self.dim();
        let chol = (self.rank == n)
            .then(|| self.cov.clone().cholesky())
            .flatten()
            .ok_or(Error::NoDensity { rank: self.rank, dim: n })?;
        let d = y - &self.mean;
        let z = chol.solve(&d);
        let quad = d.dot(&z);
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        Ok((-0.5 * (n as f64 * std::f64::consts::TAU.ln() + log_det + quad)).exp())
    }

    /// Characteristic function `e^{i⟨m,h⟩ − ½⟨Qh,h⟩}`.
    pub fn fourier(&self, h: &Vector) -> C64 {
        let phase = self.mean.dot(h);
        let decay = -0.5 * (&self.cov * h).dot(h);
        C64::from_polar(decay.exp(), phase)
    }

    /// `self ⋆ other`: means and covariances add.
    pub fn convolve(&self, other: &GaussianMeasure) -> Result<GaussianMeasure> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "convolution of dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        GaussianMeasure::new(&self.mean + &other.mean, &self.cov + &other.cov)
    }

    /// Image under `x ↦ Mx + c`.
    pub fn push_affine(&self, m: &Mat, c: &Vector) -> Result<GaussianMeasure> {
        GaussianMeasure::new(m * &self.mean + c, m * &self.cov * m.transpose())
    }

    /// Draws `count` samples `m + Lz` from the caller's generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<Vector> {
        let n = self.dim();
        (0..count)
            .map(|_| {
                let z = Vector::from_fn(n, |i, _| {
                    if i < self.rank {
                        rng.sample(StandardNormal)
                    } else {
                        0.0
                    }
                });
                &self.mean + &self.factor * z
            })
            .collect()
    }

    /// Deterministic sampling from a seeded ChaCha8 stream.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, count)
    }

    /// Default quadrature level for integrands oscillating at frequency `h`.
    pub fn default_level(&self, h: Option<&Vector>) -> usize {
        match h {
            Some(h) if (self.factor.transpose() * h).norm() > 3.0 => OSCILLATORY_LEVEL,
            _ => SMOOTH_LEVEL,
        }
    }

    /// Visits the pushed-forward tensor Gauss–Hermite nodes `m + Lz` with their weights.
    ///
    /// Only the `rank` nondegenerate directions are tensorized.
    pub fn for_each_node(&self, level: usize, mut visit: impl FnMut(&Vector, f64)) -> Result<()> {
        if level < 1 {
            return Err(Error::InvalidArgument("quadrature level must be positive".into()));
        }
        quadrature::check_budget(self.rank, level)?;
        let rule = hermite_rule(level);
        let cols = self.factor.columns(0, self.rank).into_owned();
        let mut y = self.mean.clone();
        quadrature::for_each_tensor_node(&rule, self.rank, |z, w| {
            y.copy_from(&self.mean);
            for (j, zj) in z.iter().enumerate() {
                y.axpy(*zj, &cols.column(j), 1.0);
            }
            visit(&y, w);
        });
        Ok(())
    }

    /// `∫ g dN(m,Q)` by tensor Gauss–Hermite quadrature.
    pub fn expectation(&self, g: impl Fn(&Vector) -> C64, level: usize) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        self.for_each_node(level, |y, w| acc += g(y) * w)?;
        Ok(acc)
    }

    pub fn expectation_real(&self, g: impl Fn(&Vector) -> f64, level: usize) -> Result<f64> {
        let mut acc = 0.0;
        self.for_each_node(level, |y, w| acc += g(y) * w)?;
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn diag(m: &[f64], q: &[f64]) -> GaussianMeasure {
        GaussianMeasure::new(
            Vector::from_column_slice(m),
            Mat::from_diagonal(&Vector::from_column_slice(q)),
        )
        .unwrap()
    }

    #[test]
    fn density_values() {
        let g = GaussianMeasure::standard(1);
        assert_relative_eq!(g.density(&Vector::zeros(1)).unwrap(), 0.398_942_280_401_432_7, epsilon = 1e-15);
        let g = diag(&[0.0, 0.0], &[1.0, 4.0]);
        let want = 0.398_942_280_401_432_7 * (-0.5f64).exp() * 0.199_471_140_200_716_35 * (-0.5f64).exp();
        assert_relative_eq!(g.density(&Vector::from_vec(vec![1.0, 2.0])).unwrap(), want, max_relative = 1e-14);
        let q = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let g = GaussianMeasure::new(Vector::from_vec(vec![1.0, -1.0]), q.clone()).unwrap();
        let peak = 1.0 / (std::f64::consts::TAU * q.determinant().sqrt());
        assert_relative_eq!(g.density(g.mean()).unwrap(), peak, max_relative = 1e-14);
    }

    #[test]
    fn singular_has_no_density() {
        let g = diag(&[0.0, 0.0], &[1.0, 0.0]);
        assert_eq!(g.rank(), 1);
        assert!(matches!(g.density(&Vector::zeros(2)), Err(Error::NoDensity { rank: 1, dim: 2 })));
    }

    #[test]
    fn fourier_values() {
        let g = GaussianMeasure::standard(2);
        let h = Vector::from_vec(vec![0.6, 0.8]);
        assert_relative_eq!(g.fourier(&h).re, 0.606_530_659_712_633_4, epsilon = 1e-15);
        assert_eq!(g.fourier(&Vector::zeros(2)), C64::new(1.0, 0.0));
        let p = GaussianMeasure::dirac(Vector::from_vec(vec![1.0, 0.0]));
        let v = p.fourier(&Vector::from_vec(vec![std::f64::consts::PI, 0.0]));
        assert!((v - C64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn convolution_rules() {
        let a = GaussianMeasure::standard(1);
        let c = a.convolve(&a).unwrap();
        assert_eq!(c.cov()[(0, 0)], 2.0);
        let d = a.convolve(&GaussianMeasure::dirac(Vector::zeros(1))).unwrap();
        assert_eq!(d, a);
        assert!(a.convolve(&GaussianMeasure::standard(2)).is_err());
    }

    #[test]
    fn sampling() {
        let z = diag(&[1.5], &[0.0]);
        assert!(z.sample(7, 100).iter().all(|x| x[0] == 1.5));
        let g = diag(&[0.0], &[4.0]);
        let s = g.sample(11, 1_000_000);
        let mean = s.iter().map(|x| x[0]).sum::<f64>() / s.len() as f64;
        let var = s.iter().map(|x| (x[0] - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
        assert!((3.97..=4.03).contains(&var), "var {var}");
        assert_eq!(g.sample(3, 50), g.sample(3, 50));
    }

    #[test]
    fn quadrature_expectations() {
        let g = GaussianMeasure::standard(1);
        assert_eq!(g.expectation_real(|x| x[0] * x[0], 2).unwrap(), 1.0);
        let v = g.expectation(|x| C64::from_polar(1.0, x[0]), 40).unwrap();
        assert!((v.re - (-0.5f64).exp()).abs() < 1e-12 && v.im.abs() < 1e-14);
        let s = diag(&[0.0], &[2.25]);
        for level in [3, 5, 20] {
            let m4 = s.expectation_real(|x| x[0].powi(4), level).unwrap();
            assert_relative_eq!(m4, 3.0 * 2.25f64.powi(2), max_relative = 1e-14);
        }
        // degenerate directions collapse to the mean
        let p = GaussianMeasure::dirac(Vector::from_vec(vec![0.3, -0.2]));
        let mut count = 0;
        p.for_each_node(20, |_, _| count += 1).unwrap();
        assert_eq!(count, 1);
    }

    #[test]
    fn quadrature_agrees_with_sampling() {
        let g = GaussianMeasure::new(
            Vector::from_vec(vec![0.2, -0.1]),
            Mat::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.7]),
        )
        .unwrap();
        let f = |x: &Vector| if x[0] + x[1] > 0.3 { 1.0 } else { 0.0 };
        let quad = g.expectation_real(f, 200).unwrap();
        let k = 200_000;
        let freq = g.sample(5, k).iter().map(f).sum::<f64>() / k as f64;
        let se = (freq * (1.0 - freq) / k as f64).sqrt();
        assert!((quad - freq).abs() < 4.0 * se + 2e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn convolution_theorem(h0 in -3.0f64..3.0, h1 in -3.0f64..3.0, a in 0.1f64..2.0, b in -0.5f64..0.5) {
            let m1 = GaussianMeasure::new(Vector::from_vec(vec![0.5, -1.0]), Mat::from_row_slice(2, 2, &[a, b * a.sqrt(), b * a.sqrt(), 1.0])).unwrap();
            let m2 = GaussianMeasure::new(Vector::from_vec(vec![-0.2, 0.3]), Mat::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.1])).unwrap();
            let h = Vector::from_vec(vec![h0, h1]);
            let lhs = m1.convolve(&m2).unwrap().fourier(&h);
            let rhs = m1.fourier(&h) * m2.fourier(&h);
            prop_assert!((lhs - rhs).norm() <= 1e-14 * rhs.norm().max(1e-300) + 1e-300);
            let ab = m1.convolve(&m2).unwrap();
            let ba = m2.convolve(&m1).unwrap();
            prop_assert!((ab.cov() - ba.cov()).norm() <= 1e-14 && (ab.mean() - ba.mean()).norm() <= 1e-14);
        }

        #[test]
        fn fourier_positive_definite(hs in proptest::collection::vec(-2.0f64..2.0, 8)) {
            let g = GaussianMeasure::new(Vector::from_vec(vec![0.3, 1.0]), Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5])).unwrap();
            let pts: Vec<Vector> = hs.chunks(2).map(Vector::from_column_slice).collect();
            let k = pts.len();
            // Hermitian matrix [φ(h_j − h_k)] as a real symmetric 2k×2k block matrix
            let mut m = Mat::zeros(2 * k, 2 * k);
            for j in 0..k {
                for l in 0..k {
                    let v = g.fourier(&(&pts[j] - &pts[l]));
                    m[(j, l)] = v.re;
                    m[(j + k, l + k)] = v.re;
                    m[(j, l + k)] = -v.im;
                    m[(j + k, l)] = v.im;
                }
            }
            prop_assert!(crate::linalg::min_eigenvalue(&m) >= -1e-12);
        }
    }
}
