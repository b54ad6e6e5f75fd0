//! The backward propagator `P_{s,t}φ(x) = ∫ φ(y + g(t,s)) N_{U(t,s)x, Q(t,s)}(dy)`,
//! its spatial derivatives, the evolution semigroup on space-time functions, and
//! operator-norm estimates between the canonical weighted spaces.

pub mod galerkin;
pub mod testfn;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::evolution::{EvolutionCache, Flow};
use crate::gaussian::{quadrature::check_budget, GaussianMeasure, SMOOTH_LEVEL};
use crate::linalg::{Mat, Vector};
use crate::spaces::SpaceTimeFunction;
use crate::C64;

pub use galerkin::{operator_norm_estimate, DegreeChoice, NormEstimate};
pub use testfn::{parse_test_function, BlackBox, CMat, CVector, MultiIndex, TestFunction, TrigTerm};

/// How a field value was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Exact,
    Quadrature { level: usize },
    MonteCarlo { paths: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApplyOptions {
    /// Gauss–Hermite points per axis for black-box inputs.
    pub level: usize,
}

impl Default for ApplyOptions {
    fn default() -> Self {
        Self { level: SMOOTH_LEVEL }
    }
}

/// A spatial field `x ↦ value` with provenance and an error estimate (zero when exact).
#[derive(Debug, Clone)]
pub struct FieldEvaluator {
    function: TestFunction,
    provenance: Provenance,
    error_estimate: f64,
}

impl FieldEvaluator {
    pub fn exact(function: TestFunction) -> Self {
        Self {
            function,
            provenance: Provenance::Exact,
            error_estimate: 0.0,
        }
    }

    pub fn eval(&self, x: &Vector) -> C64 {
        self.function.eval(x)
    }

    pub fn gradient(&self, x: &Vector) -> CVector {
        self.function.gradient(x)
    }

    pub fn function(&self) -> &TestFunction {
        &self.function
    }

    pub fn into_function(self) -> TestFunction {
        self.function
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn error_estimate(&self) -> f64 {
        self.error_estimate
    }
}

/// Maps `c·e^{i⟨h,x⟩}` through a flow: `c·e^{i⟨g,h⟩ − ½⟨Qh,h⟩}·e^{i⟨Uᵀh, x⟩}`.
pub fn propagate_term(flow: &Flow, term: &TrigTerm) -> TrigTerm {
    let h = &term.freq;
    let phase = flow.g.dot(h);
    let damping = -0.5 * (&flow.q * h).dot(h);
    TrigTerm::new(
        term.coeff * C64::new(damping, phase).exp(),
        flow.u.transpose() * h,
    )
}

/// Exact propagation of one trigonometric term over `[s, t]`.
pub fn apply_exact_trigexp(cache: &EvolutionCache, s: f64, t: f64, term: &TrigTerm) -> Result<TrigTerm> {
    Ok(propagate_term(&cache.flow(s, t)?, term))
}

/// `P_{s,t}φ`.
pub fn apply(cache: &EvolutionCache, s: f64, t: f64, phi: &TestFunction, opts: &ApplyOptions) -> Result<FieldEvaluator> {
    let flow = cache.flow(s, t)?;
    apply_flow(&flow, phi, opts)
}

/// Applies the Gaussian kernel of `flow` to `phi`.
pub fn apply_flow(flow: &Flow, phi: &TestFunction, opts: &ApplyOptions) -> Result<FieldEvaluator> {
    let n = flow.g.len();
    if phi.dim() != n {
        return Err(Error::Dimension(format!(
            "test function of {} variables for a system of dimension {n}",
            phi.dim()
        )));
    }
    match phi {
        TestFunction::Trig(terms) => Ok(FieldEvaluator::exact(TestFunction::Trig(
            terms.iter().map(|t| propagate_term(flow, t)).collect(),
        ))),
        TestFunction::Polynomial(p) => Ok(FieldEvaluator::exact(TestFunction::Polynomial(
            p.gaussian_average(&flow.u, &flow.g, &flow.q)?,
        ))),
        TestFunction::BlackBox(b) => quadrature_field(flow, b, opts.level),
    }
}

fn quadrature_field(flow: &Flow, phi: &BlackBox, level: usize) -> Result<FieldEvaluator> {
    let n = flow.g.len();
    let kernel = Arc::new(GaussianMeasure::new(Vector::zeros(n), flow.q.clone())?);
    check_budget(kernel.rank(), level)?;
    let u = Arc::new(flow.u.clone());
    let g = Arc::new(flow.g.clone());

    let value = {
        let (kernel, u, g, phi) = (kernel.clone(), u.clone(), g.clone(), phi.clone());
        move |x: &Vector, level: usize| -> C64 {
            let shift = &*u * x + &*g;
            kernel
                .expectation(|y| phi.eval(&(&shift + y)), level)
                .unwrap_or(C64::new(f64::NAN, f64::NAN))
        }
    };
    let origin = Vector::zeros(n);
    let lower = (level / 2).max(1);
    let error_estimate = (value(&origin, level) - value(&origin, lower)).norm();

    let label = format!("P[{}]", phi.label());
    let mut field = BlackBox::new(n, label, {
        let value = value.clone();
        move |x: &Vector| value(x, level)
    })
    .with_scale(phi.scale());
    if phi.has_gradient() {
        // D Pφ = Uᵀ P(Dφ)
        let phi = phi.clone();
        field = field.with_gradient(move |x: &Vector| {
            let shift = &*u * x + &*g;
            let mut acc = CVector::zeros(n);
            let _ = kernel.for_each_node(level, |y, w| {
                acc += phi.gradient(&(&shift + y)) * C64::new(w, 0.0);
            });
            let ut = u.transpose().map(|v| C64::new(v, 0.0));
            ut * acc
        });
    }
    Ok(FieldEvaluator {
        function: TestFunction::BlackBox(field),
        provenance: Provenance::Quadrature { level },
        error_estimate,
    })
}

/// Coefficients `c_β` with `D^α(φ∘U) = Σ_β c_β (D^βφ)∘U` for a linear change of variables.
pub fn commuted_multi_indices(u: &Mat, alpha: &MultiIndex) -> Vec<(MultiIndex, f64)> {
    let n = u.nrows();
    let axes = alpha.axes();
    let m = axes.len();
    let mut acc: std::collections::BTreeMap<Vec<u8>, f64> = Default::default();
    let total = n.pow(m as u32);
    for code in 0..total {
        let mut c = code;
        let mut beta = vec![0u8; n];
        let mut coeff = 1.0;
        for &j in &axes {
            let k = c % n;
            c /= n;
            beta[k] += 1;
            coeff *= u[(k, j)];
        }
        *acc.entry(beta).or_insert(0.0) += coeff;
    }
    acc.into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(b, c)| (MultiIndex(b), c))
        .collect()
}

/// `D^α P_{s,t}φ`.
pub fn derivative_field(
    cache: &EvolutionCache,
    s: f64,
    t: f64,
    phi: &TestFunction,
    alpha: &MultiIndex,
    opts: &ApplyOptions,
) -> Result<FieldEvaluator> {
    let flow = cache.flow(s, t)?;
    derivative_flow(&flow, phi, alpha, opts)
}

pub fn derivative_flow(flow: &Flow, phi: &TestFunction, alpha: &MultiIndex, opts: &ApplyOptions) -> Result<FieldEvaluator> {
    MultiIndex::new(alpha.0.clone())?;
    if alpha.dim() != flow.g.len() {
        return Err(Error::Dimension(format!(
            "multi-index of length {} in dimension {}",
            alpha.dim(),
            flow.g.len()
        )));
    }
    if let TestFunction::BlackBox(b) = phi {
        let base = quadrature_field(flow, b, opts.level)?;
        let order = alpha.order();
        let h = 1e-5 * b.scale();
        let fd_error = if order <= 1 && b.has_gradient() { 0.0 } else { h * h };
        return Ok(FieldEvaluator {
            function: base.function.derivative(alpha)?,
            provenance: base.provenance,
            error_estimate: base.error_estimate * (1.0 + order as f64) + fd_error,
        });
    }
    let mut total: Option<TestFunction> = None;
    for (beta, c) in commuted_multi_indices(&flow.u, alpha) {
        let term = apply_flow(flow, &phi.derivative(&beta)?, opts)?.into_function().scale(c);
        total = Some(match total {
            None => term,
            Some(acc) => acc.add(&term),
        });
    }
    let zero = match phi {
        TestFunction::Trig(_) => TestFunction::Trig(Vec::new()),
        _ => TestFunction::constant(flow.g.len(), 0.0),
    };
    Ok(FieldEvaluator::exact(total.unwrap_or(zero)))
}

/// `(𝒫_τ u)(t, ·) = P_{t,t+τ} u(t+τ, ·)` at every node of `u`.
///
/// With `periodic` set, `t+τ` wraps modulo the period and the flow is shifted by whole
/// periods when it would leave the cache.
pub fn semigroup_apply(
    cache: &EvolutionCache,
    tau: f64,
    u: &SpaceTimeFunction,
    periodic: bool,
    opts: &ApplyOptions,
) -> Result<SpaceTimeFunction> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative shift {tau}")));
    }
    let (t1, t2) = u.window();
    let period = if periodic {
        Some(
            u.period()
                .or(cache.system().period())
                .ok_or_else(|| Error::InvalidArgument("periodic shift of a non-periodic function".into()))?,
        )
    } else {
        None
    };
    let (_, hi) = cache.window();
    let mut values = Vec::with_capacity(u.grid().len());
    for &t in u.grid() {
        let mut r = t + tau;
        let mut s = t;
        let target = match period {
            Some(p) => {
                let wrapped = t1 + (r - t1).rem_euclid(p);
                if r > hi + 1e-12 {
                    let k = ((r - hi) / p).ceil();
                    r -= k * p;
                    s -= k * p;
                }
                wrapped
            }
            None => {
                if r > t2 + 1e-9 * (1.0 + t2.abs()) {
                    return Err(Error::OutOfRange { t: r, lo: t1, hi: t2 });
                }
                r.min(t2)
            }
        };
        let phi = u.at_time(target)?;
        let flow = cache.flow(s, r.max(s))?;
        values.push(apply_flow(&flow, &phi, opts)?.into_function());
    }
    SpaceTimeFunction::nodal(u.grid().to_vec(), values, u.period())
}
