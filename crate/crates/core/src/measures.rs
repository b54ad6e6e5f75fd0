//! Evolution systems of measures: the canonical family `ν_t = N(g(t,−∞), Q(t,−∞))`,
//! the families `ν_t ⋆ (U(t,t₀)_# μ)` generated by a base measure, and their
//! invariance diagnostics.

use crate::error::{Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::linalg::{linear_fit, Mat, Vector};
use crate::model::OuModel;
use crate::propagator::{apply_flow, ApplyOptions, TestFunction};
use crate::C64;

/// Probability measure with a closed-form characteristic function.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseMeasure {
    PointMass(Vector),
    Gaussian(GaussianMeasure),
    /// `Σ w_i N(m_i, Q_i)` with positive weights summing to one.
    Mixture(Vec<(f64, GaussianMeasure)>),
}

impl BaseMeasure {
    pub fn mixture(parts: Vec<(f64, GaussianMeasure)>) -> Result<Self> {
        if parts.is_empty() || parts.iter().any(|(w, _)| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("mixture weights must be positive".into()));
        }
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}")));
        }
        let dim = parts[0].1.dim();
        if parts.iter().any(|(_, g)| g.dim() != dim) {
            return Err(Error::Dimension("mixture components of different dimensions".into()));
        }
        Ok(BaseMeasure::Mixture(parts))
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseMeasure::PointMass(x) => x.len(),
            BaseMeasure::Gaussian(g) => g.dim(),
            BaseMeasure::Mixture(parts) => parts[0].1.dim(),
        }
    }

    /// Components as weighted Gaussians (a point mass is a degenerate Gaussian).
    pub fn components(&self) -> Vec<(f64, GaussianMeasure)> {
        match self {
            BaseMeasure::PointMass(x) => vec![(1.0, GaussianMeasure::dirac(x.clone()))],
            BaseMeasure::Gaussian(g) => vec![(1.0, g.clone())],
            BaseMeasure::Mixture(parts) => parts.clone(),
        }
    }

    pub fn fourier(&self, h: &Vector) -> C64 {
        match self {
            BaseMeasure::PointMass(x) => C64::from_polar(1.0, x.dot(h)),
            BaseMeasure::Gaussian(g) => g.fourier(h),
            BaseMeasure::Mixture(parts) => parts.iter().map(|(w, g)| g.fourier(h) * *w).sum(),
        }
    }

    pub fn mean(&self) -> Vector {
        let mut m = Vector::zeros(self.dim());
        for (w, g) in self.components() {
            m += g.mean() * w;
        }
        m
    }

    /// Covariance of the whole measure (mixtures include the spread of the means).
    pub fn covariance(&self) -> Mat {
        let mean = self.mean();
        let n = self.dim();
        let mut c = Mat::zeros(n, n);
        for (w, g) in self.components() {
            let d = g.mean() - &mean;
            c += (g.cov() + &d * d.transpose()) * w;
        }
        c
    }

    /// `∫|x|² dμ`.
    pub fn second_moment(&self) -> f64 {
        self.mean().norm_squared() + self.covariance().trace()
    }

    /// `∫ φ dμ`: closed form for trigonometric and polynomial `φ`, quadrature otherwise.
    pub fn integrate(&self, phi: &TestFunction, level: usize) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for (w, g) in self.components() {
            let v = match phi {
                TestFunction::Trig(terms) => terms.iter().map(|t| t.coeff * g.fourier(&t.freq)).sum(),
                TestFunction::Polynomial(p) => C64::new(p.expectation(g.mean(), g.cov())?, 0.0),
                TestFunction::BlackBox(_) => g.expectation(|x| phi.eval(x), level)?,
            };
            acc += v * w;
        }
        Ok(acc)
    }

    /// Image under `x ↦ Mx`.
    pub fn push_linear(&self, m: &Mat) -> Result<BaseMeasure> {
        let zero = Vector::zeros(m.nrows());
        Ok(match self {
            BaseMeasure::PointMass(x) => BaseMeasure::PointMass(m * x),
            BaseMeasure::Gaussian(g) => BaseMeasure::Gaussian(g.push_affine(m, &zero)?),
            BaseMeasure::Mixture(parts) => BaseMeasure::Mixture(
                parts
                    .iter()
                    .map(|(w, g)| Ok((*w, g.push_affine(m, &zero)?)))
                    .collect::<Result<Vec<_>>>()?,
            ),
        })
    }

    /// Convolution with a Gaussian.
    pub fn convolve(&self, nu: &GaussianMeasure) -> Result<BaseMeasure> {
        Ok(match self {
            BaseMeasure::PointMass(x) => BaseMeasure::Gaussian(GaussianMeasure::new(nu.mean() + x, nu.cov().clone())?),
            BaseMeasure::Gaussian(g) => BaseMeasure::Gaussian(g.convolve(nu)?),
            BaseMeasure::Mixture(parts) => BaseMeasure::Mixture(
                parts
                    .iter()
                    .map(|(w, g)| Ok((*w, g.convolve(nu)?)))
                    .collect::<Result<Vec<_>>>()?,
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    Canonical,
    /// `ν_t ⋆ (U(t,t₀)_# μ)`.
    FromBase { t0: f64, base: BaseMeasure },
    /// Canonical means with covariances scaled by `cov_scale` (not an evolution system
    /// unless the scale is one).
    Perturbed { cov_scale: f64 },
}

/// A family of measures indexed by time, tied to a model.
#[derive(Debug, Clone)]
pub struct MeasureFamily<'a> {
    pub model: &'a OuModel,
    pub kind: FamilyKind,
}

impl<'a> MeasureFamily<'a> {
    pub fn canonical(model: &'a OuModel) -> Self {
        Self {
            model,
            kind: FamilyKind::Canonical,
        }
    }

    pub fn from_base(model: &'a OuModel, t0: f64, base: BaseMeasure) -> Result<Self> {
        if base.dim() != model.dim() {
            return Err(Error::Dimension(format!(
                "base measure of dimension {} for a system of dimension {}",
                base.dim(),
                model.dim()
            )));
        }
        Ok(Self {
            model,
            kind: FamilyKind::FromBase { t0, base },
        })
    }

    pub fn perturbed(model: &'a OuModel, cov_scale: f64) -> Self {
        Self {
            model,
            kind: FamilyKind::Perturbed { cov_scale },
        }
    }

    /// The member at time `t`.
    pub fn at(&self, t: f64) -> Result<BaseMeasure> {
        let nu = self.model.canonical(t)?;
        match &self.kind {
            FamilyKind::Canonical => Ok(BaseMeasure::Gaussian(nu)),
            FamilyKind::Perturbed { cov_scale } => Ok(BaseMeasure::Gaussian(GaussianMeasure::new(
                nu.mean().clone(),
                nu.cov() * *cov_scale,
            )?)),
            FamilyKind::FromBase { t0, base } => base.push_linear(&transition(self.model, *t0, t)?)?.convolve(&nu),
        }
    }
}

/// `U(to, from)`, inverting the forward evolution when `to < from`.
pub fn transition(model: &OuModel, from: f64, to: f64) -> Result<Mat> {
    if to >= from {
        model.evolution_matrix(from, to)
    } else {
        let forward = model.evolution_matrix(to, from)?;
        let min = crate::linalg::min_singular_value(&forward);
        forward.try_inverse().ok_or(Error::Singular { min_eig: min })
    }
}

/// Canonical measure `ν_t`.
pub fn canonical_measure(model: &OuModel, t: f64) -> Result<GaussianMeasure> {
    model.canonical(t)
}

/// `ν̂_t(h)`.
pub fn family_fourier(fam: &MeasureFamily, t: f64, h: &Vector) -> Result<C64> {
    let nu = fam.model.canonical(t)?;
    Ok(match &fam.kind {
        FamilyKind::Canonical => nu.fourier(h),
        FamilyKind::Perturbed { cov_scale } => {
            C64::new(-0.5 * cov_scale * (nu.cov() * h).dot(h), nu.mean().dot(h)).exp()
        }
        FamilyKind::FromBase { t0, base } => {
            let u = transition(fam.model, *t0, t)?;
            nu.fourier(h) * base.fourier(&(u.transpose() * h))
        }
    })
}

/// `max_h |e^{i⟨g,h⟩ − ½⟨Qh,h⟩} ν̂_s(Uᵀh) − ν̂_t(h)|` over `hs`, with `(U, g, Q)` the flow on `[s, t]`.
pub fn invariance_residual(fam: &MeasureFamily, s: f64, t: f64, hs: &[Vector]) -> Result<f64> {
    let flow = fam.model.flow(s, t)?;
    let mut worst: f64 = 0.0;
    for h in hs {
        let kernel = C64::new(-0.5 * (&flow.q * h).dot(h), flow.g.dot(h)).exp();
        let lhs = kernel * family_fourier(fam, s, &(flow.u.transpose() * h))?;
        let rhs = family_fourier(fam, t, h)?;
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvopResidual {
    pub residual: f64,
    /// `∫ ℒ(s)φ dν_s`.
    pub generator_side: f64,
    /// `d/ds ∫ φ dν_s` by central differences.
    pub density_side: f64,
    /// Set when `dt < 1e-8`.
    pub ill_conditioned: bool,
}

/// `|∫ℒ(s)φ dν_s − ∫φ ∂_sρ(s,·) dx|` with the time derivative of the density by central differences.
pub fn invop_residual(model: &OuModel, s: f64, phi: &TestFunction, level: usize, dt: f64) -> Result<InvopResidual> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step {dt} must be positive")));
    }
    if phi.dim() != model.dim() {
        return Err(Error::Dimension("test function and system dimensions differ".into()));
    }
    let (a, b, f) = model.system().eval(s)?;
    let bbt = &b * b.transpose();
    let nu = model.canonical(s)?;
    let generator = match phi {
        TestFunction::Trig(terms) => {
            let m = nu.mean();
            let q = nu.cov();
            terms
                .iter()
                .map(|t| {
                    let k = &t.freq;
                    // E[x e^{i⟨k,x⟩}] = (m + iQk) ν̂(k)
                    let first_moment_re = &a * m + &f;
                    let first_moment_im = &a * (q * k);
                    let drift = C64::new(first_moment_re.dot(k), first_moment_im.dot(k));
                    let diffusion = -0.5 * (&bbt * k).dot(k);
                    t.coeff * nu.fourier(k) * (C64::new(diffusion, 0.0) + C64::i() * drift)
                })
                .sum::<C64>()
        }
        TestFunction::Polynomial(p) => C64::new(p.apply_generator(&a, &bbt, &f).expectation(nu.mean(), nu.cov())?, 0.0),
        TestFunction::BlackBox(_) => nu.expectation(|x| phi.generator_at(&a, &bbt, &f, x), level)?,
    };
    let plus = BaseMeasure::Gaussian(model.canonical(s + dt)?).integrate(phi, level)?;
    let minus = BaseMeasure::Gaussian(model.canonical(s - dt)?).integrate(phi, level)?;
    let density = (plus - minus) / (2.0 * dt);
    Ok(InvopResidual {
        residual: (generator - density).norm(),
        generator_side: generator.re,
        density_side: density.re,
        ill_conditioned: dt < 1e-8,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    /// `(s, gap)` rows.
    pub rows: Vec<(f64, f64)>,
    /// Fitted `d log gap / d(t − s)`, when at least two gaps are positive.
    pub rate: Option<f64>,
}

/// `gap(s) = |∫P_{s,t}φ dμ − ∫φ dν_t|` with the base measure `μ` placed at each start time `s`.
pub fn convergence_experiment(
    model: &OuModel,
    base: &BaseMeasure,
    t: f64,
    s_list: &[f64],
    phi: &TestFunction,
    level: usize,
) -> Result<ConvergenceTable> {
    let target = BaseMeasure::Gaussian(model.canonical(t)?).integrate(phi, level)?;
    let opts = ApplyOptions { level };
    let mut rows = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let field = apply_flow(&model.flow(s, t)?, phi, &opts)?;
        let start = base.integrate(field.function(), level)?;
        rows.push((s, (start - target).norm()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|(_, g)| *g > 1e-300)
        .map(|(s, g)| (t - s, g.ln()))
        .unzip();
    let rate = (xs.len() >= 2).then(|| linear_fit(&xs, &ys).0);
    Ok(ConvergenceTable { rows, rate })
}

/// `sup_t ∫|x|² dν_t` over sampled times.
pub fn windowed_second_moment(fam: &MeasureFamily, times: &[f64]) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for &t in times {
        sup = sup.max(fam.at(t)?.second_moment());
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{Coefficient, CoefficientSystem};
    use crate::poly::parse_poly;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, SQRT_2};

    fn v1(x: f64) -> Vector {
        Vector::from_vec(vec![x])
    }

    fn bench(f: f64) -> OuModel {
        OuModel::with_defaults(CoefficientSystem::scalar(-1.0, SQRT_2, f), (-1.0, 10.0)).unwrap()
    }

    fn periodic() -> OuModel {
        let m = |x: f64| Mat::from_element(1, 1, x);
        let a = Coefficient::Periodic {
            base: m(-1.0),
            sin_amp: vec![m(-0.5)],
            cos_amp: vec![],
            period: 2.0 * PI,
        };
        let f = Coefficient::Periodic {
            base: Mat::zeros(1, 1),
            sin_amp: vec![],
            cos_amp: vec![m(0.3)],
            period: 2.0 * PI,
        };
        let sys = CoefficientSystem::new(a, Coefficient::Constant(m(1.0)), f).unwrap();
        OuModel::with_defaults(sys, (0.0, 2.0 * PI)).unwrap()
    }

    #[test]
    fn canonical_closed_forms() {
        let nu = canonical_measure(&bench(0.0), 2.0).unwrap();
        assert!(nu.mean()[0].abs() < 1e-12 && (nu.cov()[(0, 0)] - 1.0).abs() < 1e-10);
        let nu = canonical_measure(&bench(3.0), 2.0).unwrap();
        assert!((nu.mean()[0] - 3.0).abs() < 1e-10);
        let m = periodic();
        let (a, b) = (m.canonical(0.5).unwrap(), m.canonical(0.5 + 2.0 * PI).unwrap());
        assert!((a.mean()[0] - b.mean()[0]).abs() < 1e-9);
        assert!((a.cov()[(0, 0)] - b.cov()[(0, 0)]).abs() < 1e-9);
    }

    #[test]
    fn fourier_of_families() {
        let model = bench(0.5);
        let fam = MeasureFamily::canonical(&model);
        assert!((family_fourier(&fam, 1.0, &v1(0.0)).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-15);
        let x0 = v1(0.8);
        let point = MeasureFamily::from_base(&model, 2.0, BaseMeasure::PointMass(x0.clone())).unwrap();
        let h = v1(1.7);
        let want = C64::from_polar(1.0, x0.dot(&h)) * model.canonical(2.0).unwrap().fourier(&h);
        assert!((family_fourier(&point, 2.0, &h).unwrap() - want).norm() < 1e-14);

        let base = GaussianMeasure::new(v1(-0.4), Mat::from_element(1, 1, 0.3)).unwrap();
        let fam = MeasureFamily::from_base(&model, 1.0, BaseMeasure::Gaussian(base.clone())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let t = rng.gen_range(0.0..5.0);
            let h = v1(rng.gen_range(-3.0..3.0));
            let pushed = base.push_affine(&transition(&model, 1.0, t).unwrap(), &v1(0.0)).unwrap();
            let direct = model.canonical(t).unwrap().convolve(&pushed).unwrap().fourier(&h);
            assert!((family_fourier(&fam, t, &h).unwrap() - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn invariance_and_detector() {
        let model = bench(0.0);
        let hs: Vec<Vector> = (0..30).map(|i| v1(-3.0 + 0.2 * i as f64)).collect();
        let canonical = MeasureFamily::canonical(&model);
        let point = MeasureFamily::from_base(&model, 1.0, BaseMeasure::PointMass(v1(1.5))).unwrap();
        let bad = MeasureFamily::perturbed(&model, 1.1);
        for (s, t) in [(0.0, 0.5), (1.0, 4.0), (2.0, 2.0)] {
            assert!(invariance_residual(&canonical, s, t, &hs).unwrap() <= 1e-9);
            assert!(invariance_residual(&point, s, t, &hs).unwrap() <= 1e-9);
        }
        assert!(invariance_residual(&bad, 0.0, 1.0, &hs).unwrap() > 1e-3);
    }

    #[test]
    fn generator_against_density_derivative() {
        let model = bench(0.0);
        let e = TestFunction::trig(C64::new(1.0, 0.0), v1(1.0));
        assert!(invop_residual(&model, 1.0, &e, 30, 1e-4).unwrap().residual <= 1e-9);
        let one = TestFunction::constant(1, 1.0);
        assert!(invop_residual(&model, 1.0, &one, 10, 1e-4).unwrap().residual <= 1e-12);

        let model = periodic();
        let x2 = TestFunction::polynomial(parse_poly("x^2", 1).unwrap()).unwrap();
        let r = invop_residual(&model, 1.3, &x2, 10, 1e-4).unwrap();
        assert!(r.residual <= 5e-6, "{r:?}");
        assert!(r.generator_side.abs() > 1e-3);
        let trig = TestFunction::cos(v1(1.5));
        assert!(invop_residual(&model, 2.0, &trig, 30, 1e-4).unwrap().residual <= 5e-6);
    }

    #[test]
    fn delta_base_converges() {
        let model = OuModel::new(
            CoefficientSystem::scalar(-1.0, SQRT_2, 0.0),
            (0.0, 1.0),
            &crate::model::ModelOptions {
                history: 10.0,
                ..Default::default()
            },
        )
        .unwrap();
        let phi = TestFunction::trig(C64::new(1.0, 0.0), v1(1.0));
        let s_list: Vec<f64> = (0..8).map(|i| -1.0 - i as f64).collect();
        let table = convergence_experiment(&model, &BaseMeasure::PointMass(v1(0.0)), 1.0, &s_list, &phi, 20).unwrap();
        assert!(table.rows.windows(2).all(|w| w[1].1 < w[0].1));
        assert!((table.rate.unwrap() + 2.0).abs() < 0.05);
        let same = convergence_experiment(
            &model,
            &BaseMeasure::Gaussian(model.canonical(-3.0).unwrap()),
            1.0,
            &[-3.0],
            &phi,
            20,
        )
        .unwrap();
        assert!(same.rows[0].1 < 1e-10);
    }

    #[test]
    fn moment_discriminator() {
        let model = bench(0.0);
        let times: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let canonical = windowed_second_moment(&MeasureFamily::canonical(&model), &times).unwrap();
        assert!((canonical - 1.0).abs() < 1e-9);
        let point = MeasureFamily::from_base(&model, 5.0, BaseMeasure::PointMass(v1(1.0))).unwrap();
        // U(t,5) = e^{5−t} grows backwards in time
        assert!(windowed_second_moment(&point, &times).unwrap() > 1e3);
    }
}
