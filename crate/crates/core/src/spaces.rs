//! Space-time functions on a time grid, weighted Sobolev norms against a family of
//! Gaussian measures, the affine pullbacks to fixed reference measures, and traces.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::linalg::{sym_inv_sqrt, sym_sqrt, Mat, Vector};
use crate::model::OuModel;
use crate::propagator::{MultiIndex, TestFunction, TrigTerm};
use crate::C64;

/// `base + Σ_k cos_k·cos(kωt) + sin_k·sin(kωt)` with `ω = 2π/period`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTrig {
    pub base: C64,
    pub cos: Vec<C64>,
    pub sin: Vec<C64>,
    pub period: f64,
}

impl TimeTrig {
    pub fn constant(c: C64) -> Self {
        Self {
            base: c,
            cos: Vec::new(),
            sin: Vec::new(),
            period: 1.0,
        }
    }

    pub fn real(base: f64, cos: &[f64], sin: &[f64], period: f64) -> Self {
        let lift = |v: &[f64]| v.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self {
            base: C64::new(base, 0.0),
            cos: lift(cos),
            sin: lift(sin),
            period,
        }
    }

    fn omega(&self) -> f64 {
        TAU / self.period
    }

    pub fn value(&self, t: f64) -> C64 {
        let w = self.omega();
        let mut v = self.base;
        for (k, c) in self.cos.iter().enumerate() {
            v += c * ((k + 1) as f64 * w * t).cos();
        }
        for (k, s) in self.sin.iter().enumerate() {
            v += s * ((k + 1) as f64 * w * t).sin();
        }
        v
    }

    pub fn derivative(&self, t: f64) -> C64 {
        let w = self.omega();
        let mut v = C64::new(0.0, 0.0);
        for (k, c) in self.cos.iter().enumerate() {
            let kw = (k + 1) as f64 * w;
            v -= c * (kw * (kw * t).sin());
        }
        for (k, s) in self.sin.iter().enumerate() {
            let kw = (k + 1) as f64 * w;
            v += s * (kw * (kw * t).cos());
        }
        v
    }

    pub fn is_real(&self) -> bool {
        self.base.im == 0.0 && self.cos.iter().chain(&self.sin).all(|c| c.im == 0.0)
    }

    fn harmonics(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            base: self.base * c,
            cos: self.cos.iter().map(|v| v * c).collect(),
            sin: self.sin.iter().map(|v| v * c).collect(),
            period: self.period,
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            base: self.base.conj(),
            cos: self.cos.iter().map(|v| v.conj()).collect(),
            sin: self.sin.iter().map(|v| v.conj()).collect(),
            period: self.period,
        }
    }

    fn shared_period(&self, other: &Self) -> Result<f64> {
        match (self.harmonics(), other.harmonics()) {
            (0, _) => Ok(other.period),
            (_, 0) => Ok(self.period),
            _ if (self.period - other.period).abs() <= 1e-12 * self.period => Ok(self.period),
            _ => Err(Error::InvalidArgument(format!(
                "periods {} and {} differ",
                self.period, other.period
            ))),
        }
    }

    /// Coefficients of `e^{ikωt}` for `k = −K..=K`.
    fn exponential_coeffs(&self) -> Vec<C64> {
        let k = self.harmonics();
        let mut c = vec![C64::new(0.0, 0.0); 2 * k + 1];
        c[k] = self.base;
        let i = C64::i();
        for j in 0..k {
            let a = self.cos.get(j).copied().unwrap_or_default();
            let b = self.sin.get(j).copied().unwrap_or_default();
            c[k + j + 1] = (a - i * b) * 0.5;
            c[k - j - 1] = (a + i * b) * 0.5;
        }
        c
    }

    fn from_exponential(c: &[C64], period: f64) -> Self {
        let k = c.len() / 2;
        let i = C64::i();
        Self {
            base: c[k],
            cos: (1..=k).map(|j| c[k + j] + c[k - j]).collect(),
            sin: (1..=k).map(|j| i * (c[k + j] - c[k - j])).collect(),
            period,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let period = self.shared_period(other)?;
        let k = self.harmonics().max(other.harmonics());
        let pick = |v: &[C64], j: usize| v.get(j).copied().unwrap_or_default();
        Ok(Self {
            base: self.base + other.base,
            cos: (0..k).map(|j| pick(&self.cos, j) + pick(&other.cos, j)).collect(),
            sin: (0..k).map(|j| pick(&self.sin, j) + pick(&other.sin, j)).collect(),
            period,
        })
    }

    /// Pointwise product, exact in the harmonic basis.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        let period = self.shared_period(other)?;
        let (a, b) = (self.exponential_coeffs(), other.exponential_coeffs());
        let mut c = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                c[i + j] += x * y;
            }
        }
        Ok(Self::from_exponential(&c, period))
    }
}

/// `Φ(t)·e^{i⟨h(t), x⟩}` with real frequencies `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigExpTerm {
    pub amplitude: TimeTrig,
    pub freq: Vec<TimeTrig>,
}

impl TrigExpTerm {
    pub fn new(amplitude: TimeTrig, freq: Vec<TimeTrig>) -> Result<Self> {
        if !freq.iter().all(TimeTrig::is_real) {
            return Err(Error::InvalidArgument("frequencies must be real".into()));
        }
        Ok(Self { amplitude, freq })
    }

    /// Constant-in-time term.
    pub fn stationary(term: &TrigTerm) -> Self {
        Self {
            amplitude: TimeTrig::constant(term.coeff),
            freq: term.freq.iter().map(|&h| TimeTrig::constant(C64::new(h, 0.0))).collect(),
        }
    }

    /// Complex conjugate `Φ̄(t)·e^{−i⟨h(t), x⟩}`.
    pub fn conj(&self) -> Self {
        Self {
            amplitude: self.amplitude.conj(),
            freq: self.freq.iter().map(|h| h.scale(C64::new(-1.0, 0.0))).collect(),
        }
    }

    /// Pointwise product of two terms.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.freq.len() != other.freq.len() {
            return Err(Error::Dimension("terms of different dimensions".into()));
        }
        Ok(Self {
            amplitude: self.amplitude.mul(&other.amplitude)?,
            freq: self.freq.iter().zip(&other.freq).map(|(a, b)| a.add(b)).collect::<Result<_>>()?,
        })
    }

    pub fn at(&self, t: f64) -> TrigTerm {
        TrigTerm::new(
            self.amplitude.value(t),
            Vector::from_iterator(self.freq.len(), self.freq.iter().map(|h| h.value(t).re)),
        )
    }

    /// `∂_t` at `(t, x)`: `(Φ' + iΦ⟨h', x⟩)e^{i⟨h,x⟩}`.
    pub fn time_derivative(&self, t: f64, x: &Vector) -> C64 {
        let term = self.at(t);
        let dh: f64 = self.freq.iter().zip(x.iter()).map(|(h, xi)| h.derivative(t).re * xi).sum();
        let phase = C64::from_polar(1.0, term.freq.dot(x));
        (self.amplitude.derivative(t) + C64::i() * term.coeff * dh) * phase
    }
}

#[derive(Debug, Clone)]
pub enum Representation {
    TrigExp(Vec<TrigExpTerm>),
    /// One spatial function per grid node.
    Nodal(Vec<TestFunction>),
}

/// `u(t, x)` sampled on a strictly increasing time grid.
#[derive(Debug, Clone)]
pub struct SpaceTimeFunction {
    dim: usize,
    grid: Vec<f64>,
    period: Option<f64>,
    repr: Representation,
}

/// `nodes` equally spaced points on `[t1, t2]`.
pub fn uniform_grid(t1: f64, t2: f64, nodes: usize) -> Vec<f64> {
    let m = nodes.max(2) - 1;
    (0..=m).map(|i| t1 + (t2 - t1) * i as f64 / m as f64).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("time grid needs at least two nodes".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("time grid must be strictly increasing".into()));
    }
    Ok(())
}

fn probe_points(dim: usize) -> Vec<Vector> {
    let mut pts = vec![Vector::zeros(dim)];
    for j in 0..dim {
        let mut p = Vector::zeros(dim);
        p[j] = 0.7;
        pts.push(p.clone());
        p[j] = -1.3;
        pts.push(p);
    }
    pts
}

impl SpaceTimeFunction {
    pub fn trig_exp(dim: usize, grid: Vec<f64>, terms: Vec<TrigExpTerm>, period: Option<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if terms.iter().any(|t| t.freq.len() != dim) {
            return Err(Error::Dimension(format!("frequency length differs from {dim}")));
        }
        let f = Self {
            dim,
            grid,
            period,
            repr: Representation::TrigExp(terms),
        };
        f.check_period()?;
        Ok(f)
    }

    pub fn nodal(grid: Vec<f64>, values: Vec<TestFunction>, period: Option<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} nodal values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        let dim = values[0].dim();
        if values.iter().any(|v| v.dim() != dim) {
            return Err(Error::Dimension("nodal values of different dimensions".into()));
        }
        let f = Self {
            dim,
            grid,
            period,
            repr: Representation::Nodal(values),
        };
        f.check_period()?;
        Ok(f)
    }

    /// Nodal function `t ↦ make(t)` on `grid`.
    pub fn from_fn(grid: Vec<f64>, period: Option<f64>, make: impl Fn(f64) -> Result<TestFunction>) -> Result<Self> {
        let values = grid.iter().map(|&t| make(t)).collect::<Result<Vec<_>>>()?;
        Self::nodal(grid, values, period)
    }

    fn check_period(&self) -> Result<()> {
        let Some(p) = self.period else { return Ok(()) };
        let (t1, t2) = self.window();
        if !(p > 0.0) || (t2 - t1 - p).abs() > 1e-9 * p.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "periodic window [{t1}, {t2}] does not span the period {p}"
            )));
        }
        let (first, last) = (self.node_value(0), self.node_value(self.grid.len() - 1));
        for x in probe_points(self.dim) {
            let gap = (first.eval(&x) - last.eval(&x)).norm();
            if gap > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "periodic function differs by {gap:e} at the window ends"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn window(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    /// Same function on another grid (trig-exponential functions only).
    pub fn regrid(&self, grid: Vec<f64>) -> Result<Self> {
        match &self.repr {
            Representation::TrigExp(terms) => Self::trig_exp(self.dim, grid, terms.clone(), self.period),
            Representation::Nodal(_) => Err(Error::Unsupported("regridding a nodal function".into())),
        }
    }

    pub fn node_value(&self, i: usize) -> TestFunction {
        match &self.repr {
            Representation::TrigExp(terms) => {
                TestFunction::Trig(terms.iter().map(|term| term.at(self.grid[i])).collect())
            }
            Representation::Nodal(values) => values[i].clone(),
        }
    }

    /// `u(t, ·)`; nodal functions accept grid times only.
    pub fn at_time(&self, t: f64) -> Result<TestFunction> {
        let (t1, t2) = self.window();
        let t = match self.period {
            Some(p) if t < t1 || t > t2 => t1 + (t - t1).rem_euclid(p),
            _ => t,
        };
        let tol = 1e-9 * (t2 - t1).max(1.0);
        if t < t1 - tol || t > t2 + tol {
            return Err(Error::OutOfRange { t, lo: t1, hi: t2 });
        }
        match &self.repr {
            Representation::TrigExp(terms) => Ok(TestFunction::Trig(terms.iter().map(|term| term.at(t)).collect())),
            Representation::Nodal(values) => {
                let i = self.grid.partition_point(|&g| g < t - tol);
                match self.grid.get(i) {
                    Some(&g) if (g - t).abs() <= tol => Ok(values[i].clone()),
                    _ => Err(Error::InvalidArgument(format!("time {t} is not a grid node"))),
                }
            }
        }
    }

    pub fn value(&self, i: usize, x: &Vector) -> C64 {
        match &self.repr {
            Representation::TrigExp(terms) => terms.iter().map(|term| term.at(self.grid[i]).eval(x)).sum(),
            Representation::Nodal(values) => values[i].eval(x),
        }
    }

    /// `∂_t u(t_i, x)`: analytic for trig-exponential functions, second-order differences otherwise.
    pub fn time_derivative(&self, i: usize, x: &Vector) -> C64 {
        if let Representation::TrigExp(terms) = &self.repr {
            return terms.iter().map(|term| term.time_derivative(self.grid[i], x)).sum();
        }
        let m = self.grid.len() - 1;
        let t = &self.grid;
        let f = |j: usize| self.value(j, x);
        if m == 1 {
            return (f(1) - f(0)) / (t[1] - t[0]);
        }
        // periodic ends wrap through the identified node
        let (a, b, c, ta, tb, tc) = if i == 0 || i == m {
            match self.period {
                Some(p) => {
                    let tb = t[i];
                    let (ta, tc) = if i == 0 { (t[m - 1] - p, t[1]) } else { (t[m - 1], t[1] + p) };
                    (f(m - 1), f(i), f(1), ta, tb, tc)
                }
                None if i == 0 => return one_sided([f(0), f(1), f(2)], [t[0], t[1], t[2]]),
                None => return one_sided([f(m), f(m - 1), f(m - 2)], [t[m], t[m - 1], t[m - 2]]),
            }
        } else {
            (f(i - 1), f(i), f(i + 1), t[i - 1], t[i], t[i + 1])
        };
        // derivative of the quadratic through three points, at the middle one
        let (h1, h2) = (tb - ta, tc - tb);
        c * (h1 / (h2 * (h1 + h2))) - a * (h2 / (h1 * (h1 + h2))) + b * ((h2 - h1) / (h1 * h2))
    }

    /// `c·u`.
    pub fn scale(&self, c: f64) -> Self {
        let repr = match &self.repr {
            Representation::TrigExp(terms) => Representation::TrigExp(
                terms
                    .iter()
                    .map(|term| {
                        let mut term = term.clone();
                        let a = &mut term.amplitude;
                        a.base *= c;
                        a.cos.iter_mut().chain(a.sin.iter_mut()).for_each(|v| *v *= c);
                        term
                    })
                    .collect(),
            ),
            Representation::Nodal(values) => Representation::Nodal(values.iter().map(|v| v.scale(c)).collect()),
        };
        Self { repr, ..self.clone() }
    }

    /// `u + v` on a shared grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid.len() != other.grid.len()
            || self.grid.iter().zip(&other.grid).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
        {
            return Err(Error::InvalidArgument("sum of functions on different grids".into()));
        }
        match (&self.repr, &other.repr) {
            (Representation::TrigExp(a), Representation::TrigExp(b)) => Ok(Self {
                repr: Representation::TrigExp(a.iter().chain(b).cloned().collect()),
                ..self.clone()
            }),
            _ => {
                let values = (0..self.grid.len())
                    .map(|i| self.node_value(i).add(&other.node_value(i)))
                    .collect();
                Self::nodal(self.grid.clone(), values, self.period)
            }
        }
    }
}

/// Derivative at `t[0]` of the quadratic through three points.
fn one_sided(f: [C64; 3], t: [f64; 3]) -> C64 {
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    let w0 = -(2.0 * h1 + h2) / (h1 * (h1 + h2));
    let w1 = (h1 + h2) / (h1 * h2);
    let w2 = -h1 / (h2 * (h1 + h2));
    f[0] * w0 + f[1] * w1 + f[2] * w2
}

/// Composite Simpson weights (3/8 rule on a final odd panel) for uniform grids,
/// trapezoid weights otherwise.
pub fn simpson_weights(grid: &[f64]) -> Vec<f64> {
    let m = grid.len() - 1;
    let mut w = vec![0.0; grid.len()];
    let h = (grid[m] - grid[0]) / m as f64;
    let uniform = grid
        .windows(2)
        .all(|p| ((p[1] - p[0]) - h).abs() <= 1e-9 * h.abs());
    if !uniform || m < 2 {
        for (i, p) in grid.windows(2).enumerate() {
            w[i] += 0.5 * (p[1] - p[0]);
            w[i + 1] += 0.5 * (p[1] - p[0]);
        }
        return w;
    }
    let simpson_panels = if m.is_multiple_of(2) { m } else { m - 3 };
    for i in (0..simpson_panels).step_by(2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if m % 2 == 1 {
        let s = simpson_panels;
        for (j, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
            w[s + j] += 3.0 * h / 8.0 * c;
        }
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L2,
    /// `Σ_{|α| ≤ k} ‖D^α u‖²`.
    H0k(usize),
    /// `‖u‖² + ‖∂_t u‖² + ‖Du‖² + ‖D²u‖²`.
    H12,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    pub kind: NormKind,
    /// Gauss–Hermite points per axis.
    pub level: usize,
}

impl NormSpec {
    pub fn new(kind: NormKind, level: usize) -> Result<Self> {
        if level < 2 {
            return Err(Error::InvalidArgument(format!("quadrature level {level} below 2")));
        }
        Ok(Self { kind, level })
    }

    pub fn l2(level: usize) -> Self {
        Self { kind: NormKind::L2, level }
    }
}

/// `∫ |φ|² dμ` and friends at one time slice.
fn slice_energy(u: &SpaceTimeFunction, i: usize, kind: NormKind, mu: &GaussianMeasure, level: usize) -> Result<f64> {
    let phi = u.node_value(i);
    let n = u.dim();
    let mut derivs: Vec<TestFunction> = Vec::new();
    match kind {
        NormKind::L2 => {}
        NormKind::H0k(k) => {
            for order in 1..=k {
                for alpha in MultiIndex::all_of_order(n, order) {
                    derivs.push(phi.derivative(&alpha)?);
                }
            }
        }
        NormKind::H12 => {
            for j in 0..n {
                derivs.push(phi.derivative(&MultiIndex::axis(n, j, 1))?);
            }
            for a in 0..n {
                for b in 0..n {
                    let mut alpha = vec![0u8; n];
                    alpha[a] += 1;
                    alpha[b] += 1;
                    derivs.push(phi.derivative(&MultiIndex(alpha))?);
                }
            }
        }
    }
    let with_time = kind == NormKind::H12;
    mu.expectation_real(
        |x| {
            let mut e = phi.eval(x).norm_sqr();
            for d in &derivs {
                e += d.eval(x).norm_sqr();
            }
            if with_time {
                e += u.time_derivative(i, x).norm_sqr();
            }
            e
        },
        level,
    )
}

/// Space-time norm against `dt × μ_t`; periodic functions use `(1/T) dt × μ_t`.
pub fn norm(
    u: &SpaceTimeFunction,
    spec: &NormSpec,
    measures: &dyn Fn(f64) -> Result<GaussianMeasure>,
) -> Result<f64> {
    if spec.level < 2 {
        return Err(Error::InvalidArgument(format!("quadrature level {} below 2", spec.level)));
    }
    let weights = simpson_weights(u.grid());
    let mut total = 0.0;
    for (i, (&t, &w)) in u.grid().iter().zip(&weights).enumerate() {
        let mu = measures(t)?;
        if mu.dim() != u.dim() {
            return Err(Error::Dimension(format!("measure of dimension {} for u of dimension {}", mu.dim(), u.dim())));
        }
        total += w * slice_energy(u, i, spec.kind, &mu, spec.level)?;
    }
    if let Some(p) = u.period() {
        total /= p;
    }
    Ok(total.max(0.0).sqrt())
}

/// Norm against the canonical family of `model`.
pub fn canonical_norm(u: &SpaceTimeFunction, spec: &NormSpec, model: &OuModel) -> Result<f64> {
    norm(u, spec, &|t| model.canonical(t))
}

/// Target of [`pullback`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pullback {
    /// `(𝒯u)(t,x) = u(t, Q^{1/2}(t)x + g(t))`, onto `dt × N(0, I)`.
    ToStandard,
    /// `u(t, Q^{1/2}(t)Q^{-1/2}(t₀)(x − g(t₀)) + g(t))`, onto `dt × ν_{t₀}`.
    ToSlice(f64),
}

/// Affine pullback of `u` with the canonical moments `(g(t,−∞), Q(t,−∞))`.
pub fn pullback(u: &SpaceTimeFunction, mode: Pullback, model: &OuModel) -> Result<SpaceTimeFunction> {
    let n = u.dim();
    let anchor = match mode {
        Pullback::ToStandard => None,
        Pullback::ToSlice(t0) => {
            let m = model.limit_moments(t0)?;
            Some((sym_inv_sqrt(&m.q)?, m.g))
        }
    };
    let values = u
        .grid()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let m = model.limit_moments(t)?;
            let root = sym_sqrt(&m.q)?;
            check_rank(&root, n)?;
            let (mat, shift) = match &anchor {
                None => (root, m.g.clone()),
                Some((inv0, g0)) => {
                    let mat = &root * inv0;
                    let shift = &m.g - &mat * g0;
                    (mat, shift)
                }
            };
            Ok(u.node_value(i).substitute_affine(&mat, &shift))
        })
        .collect::<Result<Vec<_>>>()?;
    SpaceTimeFunction::nodal(u.grid().to_vec(), values, u.period())
}

fn check_rank(root: &Mat, n: usize) -> Result<()> {
    let min = root.clone().symmetric_eigenvalues().min();
    if n > 0 && min <= 1e-12 * root.norm().max(1e-300) {
        return Err(Error::Singular { min_eig: min * min });
    }
    Ok(())
}

/// `(‖φ‖² + ‖|Dφ|‖²)^{1/2}` in `L²(μ)`.
pub fn trace_norm(phi: &TestFunction, mu: &GaussianMeasure, level: usize) -> Result<f64> {
    let energy = mu.expectation_real(
        |x| phi.eval(x).norm_sqr() + phi.gradient(x).iter().map(|g| g.norm_sqr()).sum::<f64>(),
        level,
    )?;
    Ok(energy.sqrt())
}

/// Trace norm against the canonical measure at `t0`.
pub fn canonical_trace_norm(phi: &TestFunction, t0: f64, model: &OuModel, level: usize) -> Result<f64> {
    trace_norm(phi, &model.canonical(t0)?, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientSystem;
    use crate::poly::parse_poly;
    use std::f64::consts::{PI, SQRT_2};

    fn standard(_: f64) -> Result<GaussianMeasure> {
        Ok(GaussianMeasure::standard(1))
    }

    fn x_poly() -> TestFunction {
        TestFunction::polynomial(parse_poly("x", 1).unwrap()).unwrap()
    }

    #[test]
    fn time_trig_products_are_pointwise() {
        let a = TimeTrig::real(0.5, &[1.0, -0.25], &[0.3], 2.0);
        let b = TimeTrig {
            base: C64::new(0.0, 1.0),
            cos: vec![],
            sin: vec![C64::new(2.0, -1.0)],
            period: 2.0,
        };
        let ab = a.mul(&b).unwrap();
        let sum = a.add(&b).unwrap();
        for t in [0.0, 0.37, 1.5, -2.2] {
            assert!((ab.value(t) - a.value(t) * b.value(t)).norm() < 1e-14);
            assert!((sum.value(t) - a.value(t) - b.value(t)).norm() < 1e-14);
            assert!((a.conj().value(t) - a.value(t).conj()).norm() < 1e-14);
        }
        assert!(a.mul(&TimeTrig::real(0.0, &[1.0], &[], 3.0)).is_err());
    }

    #[test]
    fn simpson_weights_integrate_cubics() {
        for nodes in [3, 4, 7, 10] {
            let g = uniform_grid(0.0, 2.0, nodes);
            let w = simpson_weights(&g);
            let integral: f64 = g.iter().zip(&w).map(|(t, w)| w * t.powi(3)).sum();
            assert!((integral - 4.0).abs() < 1e-12, "{nodes}");
        }
    }

    #[test]
    fn closed_form_norms() {
        let one = SpaceTimeFunction::from_fn(uniform_grid(0.0, 2.0 * PI, 41), Some(2.0 * PI), |_| {
            Ok(TestFunction::constant(1, 1.0))
        })
        .unwrap();
        assert!((norm(&one, &NormSpec::l2(10), &standard).unwrap() - 1.0).abs() < 1e-12);

        let lin = SpaceTimeFunction::from_fn(uniform_grid(0.0, 3.0, 31), None, |_| Ok(x_poly())).unwrap();
        assert!((norm(&lin, &NormSpec::l2(10), &standard).unwrap() - 3f64.sqrt()).abs() < 1e-12);

        let sin_x = SpaceTimeFunction::from_fn(uniform_grid(0.0, 2.0 * PI, 201), Some(2.0 * PI), |t| {
            Ok(x_poly().scale(t.sin()))
        })
        .unwrap();
        assert!((norm(&sin_x, &NormSpec::l2(10), &standard).unwrap() - 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn trig_exp_time_derivative_is_analytic() {
        let term = TrigExpTerm::new(
            TimeTrig::real(1.0, &[0.5], &[0.25], 2.0),
            vec![TimeTrig::real(0.3, &[], &[0.2], 2.0)],
        )
        .unwrap();
        let u = SpaceTimeFunction::trig_exp(1, uniform_grid(0.0, 2.0, 401), vec![term], Some(2.0)).unwrap();
        let nodal = SpaceTimeFunction::nodal(u.grid().to_vec(), (0..401).map(|i| u.node_value(i)).collect(), Some(2.0))
            .unwrap();
        let x = Vector::from_vec(vec![0.8]);
        for i in [0, 17, 200, 400] {
            let exact = u.time_derivative(i, &x);
            assert!((exact - nodal.time_derivative(i, &x)).norm() < 1e-3);
        }
    }

    #[test]
    fn norm_hierarchy() {
        let term = TrigExpTerm::new(
            TimeTrig::real(1.0, &[0.5], &[], 1.0),
            vec![TimeTrig::real(1.5, &[0.3], &[], 1.0)],
        )
        .unwrap();
        let u = SpaceTimeFunction::trig_exp(1, uniform_grid(0.0, 1.0, 41), vec![term], Some(1.0)).unwrap();
        let l2 = norm(&u, &NormSpec::l2(30), &standard).unwrap();
        let h02 = norm(&u, &NormSpec::new(NormKind::H0k(2), 30).unwrap(), &standard).unwrap();
        let h12 = norm(&u, &NormSpec::new(NormKind::H12, 30).unwrap(), &standard).unwrap();
        assert!(l2 <= h02 && h02 <= h12);
    }

    #[test]
    fn traces() {
        let mu = GaussianMeasure::standard(1);
        assert!((trace_norm(&TestFunction::constant(1, 1.0), &mu, 10).unwrap() - 1.0).abs() < 1e-14);
        assert!((trace_norm(&x_poly(), &mu, 10).unwrap() - SQRT_2).abs() < 1e-13);
        let e = TestFunction::trig(C64::new(1.0, 0.0), Vector::from_vec(vec![1.0]));
        assert!((trace_norm(&e, &mu, 10).unwrap() - SQRT_2).abs() < 1e-13);
    }

    #[test]
    fn pullback_preserves_l2_for_autonomous_system() {
        let sys = CoefficientSystem::scalar(-0.5, 1.0, 2.0);
        let model = OuModel::with_defaults(sys, (0.0, 2.0)).unwrap();
        let u = SpaceTimeFunction::from_fn(uniform_grid(0.0, 2.0, 21), None, |t| {
            Ok(TestFunction::polynomial(parse_poly("x^2 - x", 1).unwrap())?.scale(1.0 + t))
        })
        .unwrap();
        let direct = canonical_norm(&u, &NormSpec::l2(10), &model).unwrap();
        let pulled = pullback(&u, Pullback::ToStandard, &model).unwrap();
        let back = norm(&pulled, &NormSpec::l2(10), &standard).unwrap();
        assert!((direct - back).abs() < 1e-9 * direct);
        let constant = SpaceTimeFunction::from_fn(uniform_grid(0.0, 2.0, 5), None, |_| Ok(TestFunction::constant(1, 3.0)))
            .unwrap();
        let c = pullback(&constant, Pullback::ToSlice(1.0), &model).unwrap();
        assert!((c.value(2, &Vector::from_vec(vec![5.0])).re - 3.0).abs() < 1e-14);
    }
}
