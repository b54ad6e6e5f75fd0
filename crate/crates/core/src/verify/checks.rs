//! The registered checks. Each returns one measured value; a check passes when the
//! value is below its tolerance.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::benchmarks::{autonomous_scalar, periodic_scalar};
use crate::cauchy::{
    commutator_residual, data_norm, dissipativity_residual, gradient_energy, integrated_product_residual,
    product_rule_residual, real_part, regularity_ratio, residual, BackwardProblem, DuhamelPlan, DEGENERATE_DENOMINATOR,
};
use crate::coeffs::CoefficientSystem;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::measures::{convergence_experiment, invariance_residual, invop_residual, BaseMeasure, MeasureFamily};
use crate::model::{ModelOptions, OuModel};
use crate::moments::qinv_sqrt_norm;
use crate::poly::Poly;
use crate::propagator::{apply, semigroup_apply, ApplyOptions, MultiIndex, TestFunction, TrigTerm};
use crate::sde::{fit_weak_error, mc_expectation};
use crate::spaces::{canonical_norm, uniform_grid, NormSpec, SpaceTimeFunction, TimeTrig, TrigExpTerm};
use crate::verify::fit::{fit_smoothing_exponent, GapMode};
use crate::verify::split_seed;
use crate::C64;

type CheckFn = fn(&SuiteContext, &mut ChaCha8Rng) -> Result<f64>;

/// A named check with its default tolerance.
#[derive(Clone, Copy)]
pub struct CheckSpec {
    pub name: &'static str,
    pub tolerance: f64,
    pub summary: &'static str,
    pub run: CheckFn,
}

impl std::fmt::Debug for CheckSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CheckSpec")
            .field("name", &self.name)
            .field("tolerance", &self.tolerance)
            .finish()
    }
}

/// All checks, sorted by name.
pub fn registry() -> &'static [CheckSpec] {
    static REGISTRY: OnceLock<Vec<CheckSpec>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut v = vec![
            spec("closed-form-benchmark", 1e-8, "max error against the autonomous closed forms", closed_form),
            spec("commutator", 1e-8, "[L,D]P phi + A^T U^T P D phi on quartic polynomials", commutator),
            spec("dissipativity", 1e-7, "mean of u Gu + |B^T Du|^2/2 over a period", dissipativity),
            spec("entrance-convergence", 0.1, "(rate - omega)/|omega| of the point-mass family gap", entrance),
            spec("evolution-law", 1e-10, "flow(s,t) against flow(s,r) then flow(r,t)", evolution_law),
            spec("fourier-identity", 1e-8, "canonical family invariance at the Fourier level", fourier_identity),
            spec("gradient-energy", 1e-5, "gradient-energy balance of P phi", gradient_energy_check),
            spec("integrated-product-rule", 1e-7, "integrated product rule over a period", integrated_product),
            spec("invop-residual", 5e-6, "generator against the time derivative of the density", invop),
            spec("maximal-regularity-residual", 1e-5, "largest PDE residual over the ensemble", maxreg_residual),
            spec("maximal-regularity-stability", 0.1, "relative change of the largest ratio under halving", maxreg_stability),
            spec("mehler-monte-carlo", 1.0, "|quadrature - MC| / (3 stderr + bias)", mehler_mc),
            spec("periodic-contraction", 1e-9, "norm ratio of the periodic semigroup minus one", periodic_contraction),
            spec("perturbed-detector", 1.0, "1e-3 over the residual of a perturbed family", perturbed_detector),
            spec("point-mass-family", 1e-8, "invariance of the family started from a point mass", point_mass_family),
            spec("product-rule", 1e-9, "pointwise product rule for G", product_rule),
            spec("qinv-large-gap", 0.1, "relative variation of |Q^-1/2| on gaps in [1, 10]", qinv_large),
            spec("qinv-small-gap", 0.05, "|slope + 1/2| of |Q^-1/2| on gaps in [1e-4, 1e-2]", qinv_small),
            spec("semigroup-law", 1e-10, "composition of the evolution semigroup", semigroup_law),
            spec("smoothing-large-autonomous", 0.1, "large-gap rate minus omega |alpha|", |c, _| {
                large_gap(c.autonomous()?)
            }),
            spec("smoothing-large-periodic", 0.1, "large-gap rate minus omega |alpha|", |c, _| {
                large_gap(c.periodic_benchmark()?)
            }),
            spec("smoothing-small-a1-autonomous", 0.1, "|slope + 1/2|, gaps [1e-3, 1e-1]", |c, _| {
                small_gap(c.autonomous()?, 1)
            }),
            spec("smoothing-small-a1-periodic", 0.1, "|slope + 1/2|, gaps [1e-3, 1e-1]", |c, _| {
                small_gap(c.periodic_benchmark()?, 1)
            }),
            spec("smoothing-small-a2-autonomous", 0.15, "|slope + 1|, gaps [1e-3, 1e-1]", |c, _| {
                small_gap(c.autonomous()?, 2)
            }),
            spec("smoothing-small-a2-periodic", 0.15, "|slope + 1|, gaps [1e-3, 1e-1]", |c, _| {
                small_gap(c.periodic_benchmark()?, 2)
            }),
        ];
        v.sort_by_key(|c| c.name);
        v
    })
}

fn spec(name: &'static str, tolerance: f64, summary: &'static str, run: CheckFn) -> CheckSpec {
    CheckSpec {
        name,
        tolerance,
        summary,
        run,
    }
}

pub fn find_check(name: &str) -> Option<&'static CheckSpec> {
    registry().iter().find(|c| c.name == name)
}

/// Window of the model built on the configured system.
pub const SYSTEM_WINDOW: (f64, f64) = (0.0, 12.0);
/// Window of the benchmark models.
pub const BENCH_WINDOW: (f64, f64) = (0.0, 10.0);

#[derive(Debug, Clone)]
pub struct RegularityEnsemble {
    pub max_residual: f64,
    pub max_ratio_fine: f64,
    pub max_ratio_coarse: f64,
}

/// Shared, lazily built state of one suite run.
#[derive(Debug)]
pub struct SuiteContext {
    system: CoefficientSystem,
    seed: u64,
    model: OnceLock<Result<OuModel>>,
    periodic: OnceLock<Result<OuModel>>,
    autonomous: OnceLock<Result<OuModel>>,
    periodic_bench: OnceLock<Result<OuModel>>,
    regularity: OnceLock<Result<RegularityEnsemble>>,
}

fn cached(cell: &OnceLock<Result<OuModel>>, make: impl FnOnce() -> Result<OuModel>) -> Result<&OuModel> {
    cell.get_or_init(make).as_ref().map_err(Clone::clone)
}

impl SuiteContext {
    pub fn new(system: CoefficientSystem, seed: u64) -> Self {
        Self {
            system,
            seed,
            model: OnceLock::new(),
            periodic: OnceLock::new(),
            autonomous: OnceLock::new(),
            periodic_bench: OnceLock::new(),
            regularity: OnceLock::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn system(&self) -> &CoefficientSystem {
        &self.system
    }

    /// The configured system on [`SYSTEM_WINDOW`].
    pub fn model(&self) -> Result<&OuModel> {
        cached(&self.model, || OuModel::new(self.system.clone(), SYSTEM_WINDOW, &ModelOptions::default()))
    }

    /// The configured system when periodic, the periodic benchmark otherwise, on one
    /// period starting at zero.
    pub fn periodic(&self) -> Result<&OuModel> {
        cached(&self.periodic, || {
            let sys = match self.system.period() {
                Some(_) => self.system.clone(),
                None => periodic_scalar(),
            };
            let p = sys.period().expect("periodic system");
            let opts = ModelOptions {
                future: 1.0,
                ..ModelOptions::default()
            };
            OuModel::new(sys, (0.0, p), &opts)
        })
    }

    pub fn autonomous(&self) -> Result<&OuModel> {
        cached(&self.autonomous, || OuModel::with_defaults(autonomous_scalar(), BENCH_WINDOW))
    }

    pub fn periodic_benchmark(&self) -> Result<&OuModel> {
        cached(&self.periodic_bench, || OuModel::with_defaults(periodic_scalar(), BENCH_WINDOW))
    }

    /// Ensemble shared by the maximal-regularity checks, seeded independently of them.
    pub fn regularity(&self) -> Result<RegularityEnsemble> {
        let seed = split_seed(self.seed, "maximal-regularity");
        self.regularity
            .get_or_init(|| regularity_ensemble(self.model()?, seed))
            .clone()
    }
}

fn v1(x: f64) -> Vector {
    Vector::from_vec(vec![x])
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| rng.gen_range(-r..r)))
}

fn random_complex(rng: &mut ChaCha8Rng, r: f64) -> C64 {
    C64::new(rng.gen_range(-r..r), rng.gen_range(-r..r))
}

/// `s < t` inside `window`.
fn random_pair(rng: &mut ChaCha8Rng, window: (f64, f64)) -> (f64, f64) {
    let a = rng.gen_range(window.0..window.1);
    let b = rng.gen_range(window.0..window.1);
    if a < b {
        (a, b)
    } else if b < a {
        (b, a)
    } else {
        (window.0, window.1)
    }
}

/// Random polynomial of degree four.
fn random_quartic(rng: &mut ChaCha8Rng, n: usize) -> Poly {
    let mut p = Poly::constant(n, rng.gen_range(-1.0..1.0));
    for i in 0..n {
        let mut e = vec![0u8; n];
        e[i] = 1;
        p = p + Poly::monomial(e, rng.gen_range(-1.0..1.0));
        for j in i..n {
            let mut e = vec![0u8; n];
            e[i] += 1;
            e[j] += 1;
            p = p + Poly::monomial(e, rng.gen_range(-1.0..1.0));
        }
    }
    let mut e = vec![0u8; n];
    e[0] = 3;
    p = p + Poly::monomial(e.clone(), rng.gen_range(-0.5..0.5));
    e[0] = 4;
    p + Poly::monomial(e, rng.gen_range(0.1..0.5))
}

/// Random term `Φ(t)e^{i⟨h(t),x⟩}` with one harmonic of period `period`.
fn random_term(rng: &mut ChaCha8Rng, n: usize, period: f64, moving: bool) -> TrigExpTerm {
    let amplitude = TimeTrig {
        base: random_complex(rng, 1.0),
        cos: vec![random_complex(rng, 0.5)],
        sin: vec![random_complex(rng, 0.5)],
        period,
    };
    let freq = (0..n)
        .map(|_| {
            let k = rng.gen_range(-1.5..1.5);
            let wobble = if moving { rng.gen_range(-0.3..0.3) } else { 0.0 };
            TimeTrig::real(k, &[wobble], &[], period)
        })
        .collect();
    TrigExpTerm::new(amplitude, freq).expect("real frequencies")
}

fn closed_form(ctx: &SuiteContext, _: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.autonomous()?;
    let opts = ApplyOptions::default();
    let x = TestFunction::polynomial(Poly::var(1, 0))?;
    let x2 = TestFunction::polynomial(Poly::var(1, 0).pow(2))?;
    let mut worst: f64 = 0.0;
    for (s, t) in [(0.0, 0.5), (1.0, 3.0), (2.0, 7.5), (4.0, 4.001)] {
        let tau: f64 = t - s;
        let flow = model.flow(s, t)?;
        worst = worst.max((flow.u[(0, 0)] - (-tau).exp()).abs());
        worst = worst.max(flow.g[0].abs());
        worst = worst.max((flow.q[(0, 0)] - (1.0 - (-2.0 * tau).exp())).abs());
        let px = apply(model.cache(), s, t, &x, &opts)?;
        let px2 = apply(model.cache(), s, t, &x2, &opts)?;
        for xv in [-2.0, 0.5, 3.0] {
            worst = worst.max((px.eval(&v1(xv)).re - (-tau).exp() * xv).abs());
            let want = (-2.0 * tau).exp() * xv * xv + 1.0 - (-2.0 * tau).exp();
            worst = worst.max((px2.eval(&v1(xv)).re - want).abs());
        }
    }
    for t in [0.0, 3.3, 10.0] {
        let nu = model.canonical(t)?;
        worst = worst.max(nu.mean()[0].abs()).max((nu.cov()[(0, 0)] - 1.0).abs());
    }
    Ok(worst)
}

/// Points, paths and step of the Monte Carlo comparison.
pub const MC_POINTS: usize = 10;
pub const MC_PATHS: usize = 200_000;
pub const MC_STEP: f64 = 1e-3;
/// Steps of the weak-error fit.
pub const MC_FIT_STEPS: [f64; 3] = [0.1, 0.05, 0.025];

fn mehler_mc(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.periodic_benchmark()?;
    let phi = TestFunction::tanh(1);
    let opts = ApplyOptions {
        level: crate::gaussian::OSCILLATORY_LEVEL,
    };
    let mut worst: f64 = 0.0;
    for _ in 0..MC_POINTS {
        let s = rng.gen_range(0.0..2.0 * PI);
        let t = s + rng.gen_range(0.25..1.0);
        let x = v1(rng.gen_range(-1.5..1.5));
        let seed: u64 = rng.gen();
        let exact = apply(model.cache(), s, t, &phi, &opts)?.eval(&x).re;
        let mc = mc_expectation(model.system(), s, t, &x, &phi, MC_PATHS, MC_STEP, seed)?;
        let fit = fit_weak_error(model.system(), s, t, &x, &phi, exact, MC_PATHS, &MC_FIT_STEPS, seed ^ 1)?;
        let allowance = 3.0 * mc.stderr + fit.bias(MC_STEP);
        worst = worst.max((mc.mean.re - exact).abs() / allowance);
    }
    Ok(worst)
}

fn invariance_pairs(rng: &mut ChaCha8Rng, fam: &MeasureFamily, window: (f64, f64)) -> Result<f64> {
    let n = fam.model.dim();
    let hs: Vec<Vector> = (0..30).map(|_| random_vector(rng, n, 3.0)).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let (s, t) = random_pair(rng, window);
        worst = worst.max(invariance_residual(fam, s, t, &hs)?);
    }
    Ok(worst)
}

fn fourier_identity(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.model()?;
    invariance_pairs(rng, &MeasureFamily::canonical(model), model.window())
}

fn point_mass_family(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.model()?;
    let (t1, t2) = model.window();
    let x0 = random_vector(rng, model.dim(), 2.0);
    let fam = MeasureFamily::from_base(model, t1, BaseMeasure::PointMass(x0))?;
    invariance_pairs(rng, &fam, (t1, t2))
}

/// Covariance scale of the deliberately wrong family.
pub const DETECTOR_SCALE: f64 = 1.1;

fn perturbed_detector(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.model()?;
    let fam = MeasureFamily::perturbed(model, DETECTOR_SCALE);
    let n = model.dim();
    let hs: Vec<Vector> = (0..30).map(|_| random_vector(rng, n, 3.0)).collect();
    let (s, t) = random_pair(rng, model.window());
    let r = invariance_residual(&fam, s, t, &hs)?;
    Ok(1e-3 / r)
}

fn small_gap(model: &OuModel, order: u8) -> Result<f64> {
    let fit = fit_smoothing_exponent(model, &MultiIndex::new(vec![order])?, (1e-3, 1e-1), 7, GapMode::Small)?;
    Ok((fit.slope + order as f64 / 2.0).abs())
}

fn large_gap(model: &OuModel) -> Result<f64> {
    let omega = model.growth().omega;
    let mut worst = f64::NEG_INFINITY;
    for order in [1u8, 2] {
        let fit = fit_smoothing_exponent(model, &MultiIndex::new(vec![order])?, (1.0, 8.0), 8, GapMode::Large)?;
        worst = worst.max(fit.slope - omega * order as f64);
    }
    Ok(worst)
}

fn qinv_small(ctx: &SuiteContext, _: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.model()?;
    let s = model.window().0;
    let gaps = crate::verify::fit::gap_grid((1e-4, 1e-2), 10, GapMode::Small);
    let ys = gaps
        .iter()
        .map(|g| Ok(qinv_sqrt_norm(model.cache(), s, s + g)?.ln()))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    Ok((crate::linalg::linear_fit(&xs, &ys).0 + 0.5).abs())
}

fn qinv_large(ctx: &SuiteContext, _: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.model()?;
    let s = model.window().0;
    let values = crate::verify::fit::gap_grid((1.0, 10.0), 10, GapMode::Large)
        .iter()
        .map(|g| qinv_sqrt_norm(model.cache(), s, s + g))
        .collect::<Result<Vec<_>>>()?;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(max / min - 1.0)
}

fn periodic_terms(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<(Vec<TrigExpTerm>, Vec<TrigExpTerm>)> {
    let model = ctx.periodic()?;
    let p = model.system().period().expect("periodic model");
    let n = model.dim();
    let g = real_part(&[random_term(rng, n, p, true)]);
    let h = real_part(&[random_term(rng, n, p, true)]);
    Ok((g, h))
}

/// Time nodes over one period and Gauss–Hermite level of the periodic identities.
const PERIOD_NODES: usize = 64;
const PERIOD_LEVEL: usize = 40;

fn product_rule(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (g, h) = periodic_terms(ctx, rng)?;
    let model = ctx.periodic()?;
    let (t1, t2) = model.window();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let t = rng.gen_range(t1..t2);
        let x = random_vector(rng, model.dim(), 2.0);
        worst = worst.max(product_rule_residual(model, &g, &h, t, &x)?);
    }
    Ok(worst)
}

fn integrated_product(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (g, h) = periodic_terms(ctx, rng)?;
    let model = ctx.periodic()?;
    integrated_product_residual(model, &g, &h, model.window().0, PERIOD_NODES, PERIOD_LEVEL)
}

fn dissipativity(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (g, _) = periodic_terms(ctx, rng)?;
    let model = ctx.periodic()?;
    dissipativity_residual(model, &g, model.window().0, PERIOD_NODES, PERIOD_LEVEL)
}

fn commutator(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.model()?;
    let n = model.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let phi = random_quartic(rng, n);
        let (s, t) = random_pair(rng, model.window());
        let points: Vec<Vector> = (0..5).map(|_| random_vector(rng, n, 2.0)).collect();
        worst = worst.max(commutator_residual(model, s, t, &phi, &points)?);
    }
    Ok(worst)
}

fn invop(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for model in [ctx.model()?, ctx.periodic()?] {
        let n = model.dim();
        let (t1, t2) = model.window();
        let square = (0..n).fold(Poly::zero(n), |acc, i| acc + Poly::var(n, i).pow(2));
        for _ in 0..5 {
            let s = rng.gen_range(t1 + 0.5..t2 - 0.5);
            let trig = TestFunction::cos(random_vector(rng, n, 1.5));
            for phi in [TestFunction::polynomial(square.clone())?, trig] {
                worst = worst.max(invop_residual(model, s, &phi, 20, 1e-4)?.residual);
            }
        }
    }
    Ok(worst)
}

fn gradient_energy_check(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.model()?;
    let phi = random_quartic(rng, model.dim());
    let s = rng.gen_range(1.0..5.0);
    Ok(gradient_energy(model, &phi, (s, s + 1.0), 201, 10)?.residual())
}

fn periodic_function(ctx: &SuiteContext, rng: &mut ChaCha8Rng, nodes: usize) -> Result<SpaceTimeFunction> {
    let model = ctx.periodic()?;
    let p = model.system().period().expect("periodic model");
    let (t1, _) = model.window();
    let terms = vec![random_term(rng, model.dim(), p, true), random_term(rng, model.dim(), p, false)];
    SpaceTimeFunction::trig_exp(model.dim(), uniform_grid(t1, t1 + p, nodes), terms, Some(p))
}

const SEMIGROUP_NODES: usize = 65;

fn semigroup_law(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.periodic()?;
    let u = periodic_function(ctx, rng, SEMIGROUP_NODES)?;
    let h = u.grid()[1] - u.grid()[0];
    let opts = ApplyOptions::default();
    let (tau1, tau2) = (3.0 * h, 5.0 * h);
    let whole = semigroup_apply(model.cache(), tau1 + tau2, &u, true, &opts)?;
    let inner = semigroup_apply(model.cache(), tau2, &u, true, &opts)?;
    let split = semigroup_apply(model.cache(), tau1, &inner, true, &opts)?;
    let points: Vec<Vector> = (0..5).map(|_| random_vector(rng, model.dim(), 2.0)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..u.grid().len() {
        for x in &points {
            worst = worst.max((whole.value(i, x) - split.value(i, x)).norm());
        }
    }
    Ok(worst)
}

fn periodic_contraction(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.periodic()?;
    let u = periodic_function(ctx, rng, SEMIGROUP_NODES)?;
    let h = u.grid()[1] - u.grid()[0];
    let spec = NormSpec::l2(PERIOD_LEVEL);
    let base = canonical_norm(&u, &spec, model)?;
    let mut worst = f64::NEG_INFINITY;
    for steps in [2.0, 10.0, 32.0] {
        let shifted = semigroup_apply(model.cache(), steps * h, &u, true, &ApplyOptions::default())?;
        worst = worst.max(canonical_norm(&shifted, &spec, model)? / base - 1.0);
    }
    Ok(worst)
}

fn evolution_law(ctx: &SuiteContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.model()?;
    let (t1, t2) = model.window();
    let mut worst: f64 = 0.0;
    let diff = |a: &Mat, b: &Mat| (a - b).abs().max();
    for _ in 0..20 {
        let mut v = [rng.gen_range(t1..t2), rng.gen_range(t1..t2), rng.gen_range(t1..t2)];
        v.sort_by(|a, b| a.total_cmp(b));
        let [s, r, t] = v;
        let whole = model.flow(s, t)?;
        let split = model.flow(s, r)?.then(&model.flow(r, t)?);
        worst = worst
            .max(diff(&whole.u, &split.u))
            .max((&whole.g - &split.g).abs().max())
            .max(diff(&whole.q, &split.q));
        let same = model.flow(r, r)?;
        worst = worst.max(diff(&same.u, &Mat::identity(model.dim(), model.dim())));
    }
    Ok(worst)
}

/// Problems, window and resolutions of the maximal-regularity ensemble.
pub const ENSEMBLE_SIZE: usize = 50;
pub const ENSEMBLE_WINDOW: (f64, f64) = (0.0, 1.0);
pub const FINE_NODES: usize = 400;
pub const COARSE_NODES: usize = 200;
const ENSEMBLE_LEVEL: usize = 16;

/// Random trigonometric problem: real `φ` and real time-periodic forcing.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, nodes: usize) -> Result<BackwardProblem> {
    let c = random_complex(rng, 1.0);
    let k = random_vector(rng, n, 1.5);
    let phi = TestFunction::Trig(vec![TrigTerm::new(c * 0.5, k.clone()), TrigTerm::new(c.conj() * 0.5, -k)]);
    let forcing = real_part(&[random_term(rng, n, 2.0 * PI, false)]);
    let (t1, t2) = ENSEMBLE_WINDOW;
    let h = SpaceTimeFunction::trig_exp(n, vec![t1, t2], forcing, None)?;
    BackwardProblem::new(ENSEMBLE_WINDOW, phi, h, Some(nodes))
}

fn regularity_ensemble(model: &OuModel, seed: u64) -> Result<RegularityEnsemble> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = ApplyOptions::default();
    let fine = DuhamelPlan::new(model.cache(), ENSEMBLE_WINDOW, FINE_NODES, opts)?;
    let coarse = DuhamelPlan::new(model.cache(), ENSEMBLE_WINDOW, COARSE_NODES, opts)?;
    let mut out = RegularityEnsemble {
        max_residual: 0.0,
        max_ratio_fine: 0.0,
        max_ratio_coarse: 0.0,
    };
    for _ in 0..ENSEMBLE_SIZE {
        let raw = random_problem(&mut rng, model.dim(), FINE_NODES)?;
        let scale = data_norm(&raw, model, ENSEMBLE_LEVEL)?;
        if scale < DEGENERATE_DENOMINATOR {
            return Err(Error::UndefinedRatio(scale));
        }
        let prob = raw.combine(1.0 / scale, &raw, 0.0)?;
        let u = fine.solve(&prob)?;
        out.max_residual = out.max_residual.max(residual(&u, &prob, model, ENSEMBLE_LEVEL)?);
        out.max_ratio_fine = out.max_ratio_fine.max(regularity_ratio(&u, &prob, model, ENSEMBLE_LEVEL)?);
        let prob = prob.with_nodes(COARSE_NODES)?;
        let u = coarse.solve(&prob)?;
        out.max_ratio_coarse = out.max_ratio_coarse.max(regularity_ratio(&u, &prob, model, ENSEMBLE_LEVEL)?);
    }
    Ok(out)
}

fn maxreg_residual(ctx: &SuiteContext, _: &mut ChaCha8Rng) -> Result<f64> {
    Ok(ctx.regularity()?.max_residual)
}

fn maxreg_stability(ctx: &SuiteContext, _: &mut ChaCha8Rng) -> Result<f64> {
    let e = ctx.regularity()?;
    Ok((e.max_ratio_fine - e.max_ratio_coarse).abs() / e.max_ratio_fine)
}

fn entrance(ctx: &SuiteContext, _: &mut ChaCha8Rng) -> Result<f64> {
    let model = ctx.model()?;
    let n = model.dim();
    let omega = model.growth().omega;
    if !(omega < 0.0) {
        return Err(Error::NoLimit { omega });
    }
    let phi = (0..n).fold(Poly::zero(n), |acc, i| acc + Poly::var(n, i).pow(2) + Poly::var(n, i));
    let t = 8.0;
    let s_list: Vec<f64> = (1..=6).map(|k| t - k as f64).collect();
    let table = convergence_experiment(
        model,
        &BaseMeasure::PointMass(Vector::zeros(n)),
        t,
        &s_list,
        &TestFunction::polynomial(phi)?,
        10,
    )?;
    let rate = table
        .rate
        .ok_or_else(|| Error::InsufficientData("convergence gaps vanished".into()))?;
    Ok((rate - omega) / omega.abs())
}
