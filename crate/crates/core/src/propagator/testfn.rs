//! Spatial test functions: trigonometric sums, polynomials and black boxes.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::poly::{parse_poly, Poly, MAX_GAUSSIAN_DEGREE};
use crate::C64;

pub type CVector = DVector<C64>;
pub type CMat = DMatrix<C64>;

/// `c·e^{i⟨h,x⟩}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigTerm {
    pub coeff: C64,
    pub freq: Vector,
}

impl TrigTerm {
    pub fn new(coeff: C64, freq: Vector) -> Self {
        Self { coeff, freq }
    }

    pub fn eval(&self, x: &Vector) -> C64 {
        self.coeff * C64::from_polar(1.0, self.freq.dot(x))
    }

    pub fn conj(&self) -> TrigTerm {
        TrigTerm::new(self.coeff.conj(), -&self.freq)
    }
}

/// Multi-index `α ∈ ℕⁿ` of a partial derivative.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<u8>);

/// Largest supported derivative order.
pub const MAX_ORDER: usize = 4;

impl MultiIndex {
    pub fn new(alpha: Vec<u8>) -> Result<Self> {
        let m = MultiIndex(alpha);
        if m.order() > MAX_ORDER {
            return Err(Error::Unsupported(format!(
                "derivative order {} exceeds {MAX_ORDER}",
                m.order()
            )));
        }
        Ok(m)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// Unit multi-index `e_j` scaled by `k`.
    pub fn axis(dim: usize, j: usize, k: u8) -> Self {
        let mut a = vec![0; dim];
        a[j] = k;
        MultiIndex(a)
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&k| k as usize).sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Coordinates hit by the derivative, with repetition (`(2,1)` gives `[0,0,1]`).
    pub fn axes(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize))
            .collect()
    }

    /// All multi-indices of order exactly `k` in `dim` variables.
    pub fn all_of_order(dim: usize, k: usize) -> Vec<MultiIndex> {
        fn rec(dim: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<MultiIndex>) {
            if cur.len() == dim - 1 {
                cur.push(left as u8);
                out.push(MultiIndex(cur.clone()));
                cur.pop();
                return;
            }
            for take in (0..=left).rev() {
                cur.push(take as u8);
                rec(dim, left - take, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(dim, k, &mut Vec::new(), &mut out);
        out
    }
}

type ValueFn = dyn Fn(&Vector) -> C64 + Send + Sync;
type GradFn = dyn Fn(&Vector) -> CVector + Send + Sync;

/// Pointwise evaluator with an optional gradient.
#[derive(Clone)]
pub struct BlackBox {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradFn>>,
    /// Length scale for finite-difference steps.
    scale: f64,
    label: String,
}

impl fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackBox")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("gradient", &self.gradient.is_some())
            .finish()
    }
}

impl BlackBox {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        value: impl Fn(&Vector) -> C64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            gradient: None,
            scale: 1.0,
            label: label.into(),
        }
    }

    pub fn with_gradient(mut self, grad: impl Fn(&Vector) -> CVector + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(grad));
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eval(&self, x: &Vector) -> C64 {
        (self.value)(x)
    }

    /// Gradient from the evaluator, or central differences with step `1e-5·scale`.
    pub fn gradient(&self, x: &Vector) -> CVector {
        match &self.gradient {
            Some(g) => g(x),
            None => {
                let h = 1e-5 * self.scale;
                CVector::from_fn(self.dim, |j, _| {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    (self.eval(&xp) - self.eval(&xm)) / (2.0 * h)
                })
            }
        }
    }

    /// `D^α` by nested central differences (first order uses the gradient when present).
    pub fn derivative(&self, alpha: &MultiIndex) -> BlackBox {
        let axes = alpha.axes();
        if axes.is_empty() {
            return self.clone();
        }
        let order = axes.len();
        let base = self.clone();
        let first = axes[0];
        let rest = MultiIndex({
            let mut a = alpha.0.clone();
            a[first] -= 1;
            a
        });
        let partial = BlackBox::new(self.dim, format!("d{first} {}", self.label), {
            let base = base.clone();
            move |x: &Vector| base.gradient(x)[first]
        })
        .with_scale(self.scale);
        if order == 1 {
            return partial;
        }
        // remaining orders by central differences of the first partial
        let h = self.scale * 10f64.powf(-16.0 / (order as f64 + 2.0));
        let rest_axes = rest.axes();
        let label = format!("D{:?} {}", alpha.0, self.label);
        BlackBox::new(self.dim, label, move |x: &Vector| {
            nested_difference(&|y: &Vector| partial.eval(y), x, &rest_axes, h)
        })
        .with_scale(self.scale)
    }
}

fn map_transpose(m: &Mat) -> CMat {
    m.transpose().map(|v| C64::new(v, 0.0))
}

fn nested_difference(f: &dyn Fn(&Vector) -> C64, x: &Vector, axes: &[usize], h: f64) -> C64 {
    match axes.split_first() {
        None => f(x),
        Some((&j, rest)) => {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            (nested_difference(f, &xp, rest, h) - nested_difference(f, &xm, rest, h)) / (2.0 * h)
        }
    }
}

/// A spatial function on which the propagator acts.
#[derive(Debug, Clone)]
pub enum TestFunction {
    /// `Σ_j c_j e^{i⟨h_j, x⟩}`.
    Trig(Vec<TrigTerm>),
    Polynomial(Poly),
    BlackBox(BlackBox),
}

impl TestFunction {
    /// Single term `c·e^{i⟨h,x⟩}`.
    pub fn trig(coeff: C64, freq: Vector) -> Self {
        TestFunction::Trig(vec![TrigTerm::new(coeff, freq)])
    }

    /// `cos⟨h,x⟩` as a sum of two exponentials.
    pub fn cos(freq: Vector) -> Self {
        let half = C64::new(0.5, 0.0);
        TestFunction::Trig(vec![TrigTerm::new(half, freq.clone()), TrigTerm::new(half, -freq)])
    }

    /// `sin⟨h,x⟩` as a sum of two exponentials.
    pub fn sin(freq: Vector) -> Self {
        let c = C64::new(0.0, -0.5);
        TestFunction::Trig(vec![TrigTerm::new(c, freq.clone()), TrigTerm::new(-c, -freq)])
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        TestFunction::Polynomial(Poly::constant(dim, c))
    }

    /// Polynomial of total degree at most four.
    pub fn polynomial(p: Poly) -> Result<Self> {
        if p.degree() > MAX_GAUSSIAN_DEGREE {
            return Err(Error::Unsupported(format!(
                "polynomial degree {} exceeds {MAX_GAUSSIAN_DEGREE}",
                p.degree()
            )));
        }
        Ok(TestFunction::Polynomial(p))
    }

    /// `tanh(x₀)` with analytic gradient.
    pub fn tanh(dim: usize) -> Self {
        TestFunction::BlackBox(
            BlackBox::new(dim, "tanh", |x: &Vector| C64::new(x[0].tanh(), 0.0)).with_gradient(
                move |x: &Vector| {
                    let mut g = CVector::zeros(x.len());
                    g[0] = C64::new(1.0 - x[0].tanh().powi(2), 0.0);
                    g
                },
            ),
        )
    }

    pub fn dim(&self) -> usize {
        match self {
            TestFunction::Trig(terms) => terms.first().map_or(0, |t| t.freq.len()),
            TestFunction::Polynomial(p) => p.dim(),
            TestFunction::BlackBox(b) => b.dim,
        }
    }

    pub fn is_exact_class(&self) -> bool {
        !matches!(self, TestFunction::BlackBox(_))
    }

    pub fn eval(&self, x: &Vector) -> C64 {
        match self {
            TestFunction::Trig(terms) => terms.iter().map(|t| t.eval(x)).sum(),
            TestFunction::Polynomial(p) => C64::new(p.eval(x.as_slice()), 0.0),
            TestFunction::BlackBox(b) => b.eval(x),
        }
    }

    pub fn gradient(&self, x: &Vector) -> CVector {
        let n = x.len();
        match self {
            TestFunction::Trig(terms) => {
                let mut g = CVector::zeros(n);
                for t in terms {
                    let v = t.eval(x) * C64::i();
                    for j in 0..n {
                        g[j] += v * t.freq[j];
                    }
                }
                g
            }
            TestFunction::Polynomial(p) => {
                CVector::from_fn(n, |j, _| C64::new(p.derivative(j).eval(x.as_slice()), 0.0))
            }
            TestFunction::BlackBox(b) => b.gradient(x),
        }
    }

    pub fn hessian(&self, x: &Vector) -> CMat {
        let n = x.len();
        match self {
            TestFunction::Trig(terms) => {
                let mut h = CMat::zeros(n, n);
                for t in terms {
                    let v = -t.eval(x);
                    for i in 0..n {
                        for j in 0..n {
                            h[(i, j)] += v * (t.freq[i] * t.freq[j]);
                        }
                    }
                }
                h
            }
            TestFunction::Polynomial(p) => CMat::from_fn(n, n, |i, j| {
                C64::new(p.derivative(i).derivative(j).eval(x.as_slice()), 0.0)
            }),
            TestFunction::BlackBox(_) => CMat::from_fn(n, n, |i, j| {
                let mut a = vec![0u8; n];
                a[i] += 1;
                a[j] += 1;
                self.derivative(&MultiIndex(a)).map(|d| d.eval(x)).unwrap_or_default()
            }),
        }
    }

    /// `D^α φ` within the class (black boxes by finite differences).
    pub fn derivative(&self, alpha: &MultiIndex) -> Result<TestFunction> {
        if alpha.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "multi-index of length {} for a function of {} variables",
                alpha.dim(),
                self.dim()
            )));
        }
        Ok(match self {
            TestFunction::Trig(terms) => TestFunction::Trig(
                terms
                    .iter()
                    .map(|t| {
                        let mut c = t.coeff;
                        for j in alpha.axes() {
                            c *= C64::new(0.0, t.freq[j]);
                        }
                        TrigTerm::new(c, t.freq.clone())
                    })
                    .collect(),
            ),
            TestFunction::Polynomial(p) => TestFunction::Polynomial(p.derivative_multi(&alpha.0)),
            TestFunction::BlackBox(b) => TestFunction::BlackBox(b.derivative(alpha)),
        })
    }

    /// `(ℒφ)(x) = ½ Tr(BBᵀD²φ(x)) + ⟨Ax + f, Dφ(x)⟩` at a point.
    pub fn generator_at(&self, a: &Mat, bbt: &Mat, f: &Vector, x: &Vector) -> C64 {
        let n = x.len();
        let hess = self.hessian(x);
        let grad = self.gradient(x);
        let drift = a * x + f;
        let mut out = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                out += hess[(i, j)] * (0.5 * bbt[(i, j)]);
            }
            out += grad[i] * drift[i];
        }
        out
    }

    /// `c·φ`.
    pub fn scale(&self, c: f64) -> TestFunction {
        match self {
            TestFunction::Trig(terms) => TestFunction::Trig(
                terms
                    .iter()
                    .map(|t| TrigTerm::new(t.coeff * c, t.freq.clone()))
                    .collect(),
            ),
            TestFunction::Polynomial(p) => TestFunction::Polynomial(p.scale(c)),
            TestFunction::BlackBox(b) => {
                let inner = b.clone();
                TestFunction::BlackBox(
                    BlackBox::new(b.dim, format!("{c}*{}", b.label), move |x: &Vector| inner.eval(x) * c)
                        .with_scale(b.scale),
                )
            }
        }
    }

    /// `φ + ψ`; mixed classes fall back to a black box.
    pub fn add(&self, other: &TestFunction) -> TestFunction {
        match (self, other) {
            (TestFunction::Trig(a), TestFunction::Trig(b)) => {
                TestFunction::Trig(a.iter().chain(b).cloned().collect())
            }
            (TestFunction::Polynomial(a), TestFunction::Polynomial(b)) => {
                TestFunction::Polynomial(a.clone() + b.clone())
            }
            _ => {
                let (a, b) = (self.clone(), other.clone());
                TestFunction::BlackBox(BlackBox::new(self.dim(), "sum", move |x: &Vector| {
                    a.eval(x) + b.eval(x)
                }))
            }
        }
    }

    /// `x ↦ φ(Mx + c)`.
    pub fn substitute_affine(&self, m: &Mat, c: &Vector) -> TestFunction {
        match self {
            TestFunction::Trig(terms) => TestFunction::Trig(
                terms
                    .iter()
                    .map(|t| {
                        TrigTerm::new(t.coeff * C64::from_polar(1.0, t.freq.dot(c)), m.transpose() * &t.freq)
                    })
                    .collect(),
            ),
            TestFunction::Polynomial(p) => TestFunction::Polynomial(p.substitute_affine(m, c)),
            TestFunction::BlackBox(b) => {
                let mt = map_transpose(m);
                let cols = m.ncols();
                let (inner, m, c) = (b.clone(), m.clone(), c.clone());
                let map = move |x: &Vector| &m * x + &c;
                let grad_inner = inner.clone();
                let grad_map = map.clone();
                TestFunction::BlackBox(
                    BlackBox::new(cols, format!("affine {}", b.label), move |x: &Vector| inner.eval(&map(x)))
                        .with_gradient(move |x: &Vector| &mt * grad_inner.gradient(&grad_map(x)))
                        .with_scale(b.scale),
                )
            }
        }
    }

    /// Upper bound of `sup|φ|` for trigonometric sums.
    pub fn trig_bound(&self) -> Option<f64> {
        match self {
            TestFunction::Trig(terms) => Some(terms.iter().map(|t| t.coeff.norm()).sum()),
            _ => None,
        }
    }
}

/// Parses a test-function description.
///
/// Accepted forms: `poly:<expr>` (or a bare polynomial such as `x^2`), `exp:c,h1,…,hn`
/// for `c·e^{i⟨h,x⟩}`, `cos:h1,…`, `sin:h1,…`, `const:c` and `tanh`.
pub fn parse_test_function(text: &str, dim: usize) -> Result<TestFunction> {
    let bad = |msg: &str| Error::InvalidArgument(format!("test function `{text}`: {msg}"));
    let numbers = |body: &str| -> Result<Vec<f64>> {
        body.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("expected numbers")))
            .collect()
    };
    let freq = |v: &[f64]| -> Result<Vector> {
        if v.len() != dim {
            return Err(bad(&format!("expected {dim} frequency components")));
        }
        Ok(Vector::from_column_slice(v))
    };
    let text = text.trim();
    if text == "tanh" {
        return Ok(TestFunction::tanh(dim));
    }
    match text.split_once(':') {
        Some(("poly", body)) => TestFunction::polynomial(parse_poly(body, dim)?),
        Some(("const", body)) => Ok(TestFunction::constant(dim, numbers(body)?[0])),
        Some(("exp", body)) => {
            let v = numbers(body)?;
            if v.is_empty() {
                return Err(bad("missing coefficient"));
            }
            Ok(TestFunction::trig(C64::new(v[0], 0.0), freq(&v[1..])?))
        }
        Some(("cos", body)) => Ok(TestFunction::cos(freq(&numbers(body)?)?)),
        Some(("sin", body)) => Ok(TestFunction::sin(freq(&numbers(body)?)?)),
        Some((kind, _)) => Err(bad(&format!("unknown kind `{kind}`"))),
        None => TestFunction::polynomial(parse_poly(text, dim)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(MultiIndex::all_of_order(2, 2).len(), 3);
        assert_eq!(MultiIndex::all_of_order(3, 2).len(), 6);
        assert_eq!(MultiIndex(vec![2, 1]).axes(), vec![0, 0, 1]);
        assert!(MultiIndex::new(vec![3, 2]).is_err());
    }

    #[test]
    fn trig_derivatives_and_generator() {
        let phi = TestFunction::cos(Vector::from_vec(vec![2.0]));
        let x = Vector::from_vec(vec![0.3]);
        assert!((phi.eval(&x).re - 0.6f64.cos()).abs() < 1e-15);
        assert!((phi.gradient(&x)[0].re + 2.0 * 0.6f64.sin()).abs() < 1e-15);
        assert!((phi.hessian(&x)[(0, 0)].re + 4.0 * 0.6f64.cos()).abs() < 1e-14);
        // ℒ cos(2x) with a = −1, b² = 2, f = 0: −4cos(2x) + 2x sin(2x)
        let l = phi.generator_at(
            &Mat::from_element(1, 1, -1.0),
            &Mat::from_element(1, 1, 2.0),
            &Vector::zeros(1),
            &x,
        );
        assert!((l.re - (-4.0 * 0.6f64.cos() + 0.6 * 0.6f64.sin())).abs() < 1e-14);
    }

    #[test]
    fn black_box_differences() {
        let f = TestFunction::BlackBox(BlackBox::new(1, "cube", |x: &Vector| C64::new(x[0].powi(3), 0.0)));
        let x = Vector::from_vec(vec![0.7]);
        assert!((f.gradient(&x)[0].re - 3.0 * 0.49).abs() < 1e-8);
        let d2 = f.derivative(&MultiIndex(vec![2])).unwrap();
        assert!((d2.eval(&x).re - 6.0 * 0.7).abs() < 1e-6);
    }

    #[test]
    fn parse_forms() {
        let x = Vector::from_vec(vec![0.5, -0.25]);
        let p = parse_test_function("x0^2 + x1", 2).unwrap();
        assert!((p.eval(&x).re - 0.0).abs() < 1e-15);
        let e = parse_test_function("exp:2,1,0", 2).unwrap();
        assert!((e.eval(&x) - C64::from_polar(2.0, 0.5)).norm() < 1e-15);
        assert!(parse_test_function("exp:1,1", 2).is_err());
        assert!(parse_test_function("poly:x^5", 1).is_err());
        assert!(matches!(parse_test_function("tanh", 1).unwrap(), TestFunction::BlackBox(_)));
    }
}
