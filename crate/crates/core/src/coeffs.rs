//! Coefficient data `A(t)`, `B(t)`, `f(t)` of the Ornstein–Uhlenbeck operator
//!
//! ```text
//! L(t)φ(x) = ½ Tr(B(t)B(t)ᵀ D²φ(x)) + ⟨A(t)x + f(t), Dφ(x)⟩
//! ```
//!
//! together with the config schema and the sampled checks of the standing
//! hypotheses (uniform ellipticity of `B` and exponential stability of the
//! evolution family generated by `A`).
//!
//! Config files are TOML or JSON with the same shape:
//!
//! ```toml
//! dim = 1
//! [A]
//! kind = "periodic"
//! base = [[-1.0]]
//! sin_amp = [[-0.5]]
//! period = 6.283185307179586
//! [B]
//! kind = "constant"
//! value = [[1.0]]
//! [f]
//! kind = "tabulated"
//! times = [0.0, 1.0, 2.0]
//! values = [[0.0], [0.5], [0.0]]
//! ```

use std::f64::consts::TAU;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::evolution::{EvolutionCache, DEFAULT_GROWTH_PAIRS};
use crate::linalg::{min_singular_value, spectral_norm, Mat, Vector};

/// Largest supported state dimension.
pub const MAX_DIM: usize = 16;

/// Interpolation order for tabulated coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
    /// Natural cubic spline.
    Cubic,
}

/// Tabulated coefficient on a strictly increasing time grid.
#[derive(Debug, Clone)]
pub struct Table {
    times: Vec<f64>,
    values: Vec<Mat>,
    order: Interpolation,
    /// Spline second derivatives at the knots (cubic only).
    curvature: Vec<Mat>,
}

impl Table {
    pub fn new(times: Vec<f64>, values: Vec<Mat>, order: Interpolation) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::Schema {
                field: "times".into(),
                message: format!(
                    "need at least two knots with matching values ({} times, {} values)",
                    times.len(),
                    values.len()
                ),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Schema {
                field: "times".into(),
                message: "knots must be strictly increasing".into(),
            });
        }
        if values.iter().flat_map(|m| m.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Schema {
                field: "values".into(),
                message: "non-finite table entry".into(),
            });
        }
        let curvature = match order {
            Interpolation::Linear => Vec::new(),
            Interpolation::Cubic => natural_spline_curvature(&times, &values),
        };
        Ok(Self {
            times,
            values,
            order,
            curvature,
        })
    }

    pub fn hull(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn eval(&self, t: f64) -> Result<Mat> {
        let (lo, hi) = self.hull();
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        let k = match self.times.partition_point(|&x| x <= t) {
            0 => 0,
            p => (p - 1).min(self.times.len() - 2),
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        let mut out = &self.values[k] * a + &self.values[k + 1] * b;
        if self.order == Interpolation::Cubic {
            let c0 = (a * a * a - a) * h * h / 6.0;
            let c1 = (b * b * b - b) * h * h / 6.0;
            out += &self.curvature[k] * c0 + &self.curvature[k + 1] * c1;
        }
        Ok(out)
    }
}

/// Second derivatives of the natural cubic spline through `(times, values)`, entrywise.
fn natural_spline_curvature(times: &[f64], values: &[Mat]) -> Vec<Mat> {
    let m = times.len();
    let (r, c) = values[0].shape();
    let mut out = vec![Mat::zeros(r, c); m];
    if m < 3 {
        return out;
    }
    // Thomas algorithm on the interior knots, shared matrix for all entries.
    let n = m - 2;
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs: Vec<Mat> = vec![Mat::zeros(r, c); n];
    for i in 0..n {
        let h0 = times[i + 1] - times[i];
        let h1 = times[i + 2] - times[i + 1];
        diag[i] = 2.0 * (h0 + h1);
        upper[i] = h1;
        rhs[i] = (&values[i + 2] - &values[i + 1]) * (6.0 / h1)
            - (&values[i + 1] - &values[i]) * (6.0 / h0);
    }
    for i in 1..n {
        let lower = times[i + 1] - times[i];
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        let prev = rhs[i - 1].clone();
        rhs[i] -= prev * w;
    }
    let mut sol = vec![Mat::zeros(r, c); n];
    sol[n - 1] = &rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        sol[i] = (&rhs[i] - &sol[i + 1] * upper[i]) / diag[i];
    }
    for (i, s) in sol.into_iter().enumerate() {
        out[i + 1] = s;
    }
    out
}

/// One time-dependent coefficient. Vectors (`f`) are stored as `n×1` matrices.
#[derive(Debug, Clone)]
pub enum Coefficient {
    Constant(Mat),
    /// `base + Σ_k sin_amp[k]·sin(2π(k+1)t/T) + cos_amp[k]·cos(2π(k+1)t/T)`.
    Periodic {
        base: Mat,
        sin_amp: Vec<Mat>,
        cos_amp: Vec<Mat>,
        period: f64,
    },
    Tabulated(Table),
}

impl Coefficient {
    pub fn eval(&self, t: f64) -> Result<Mat> {
        match self {
            Coefficient::Constant(m) => Ok(m.clone()),
            Coefficient::Periodic {
                base,
                sin_amp,
                cos_amp,
                period,
            } => {
                let phase = TAU * t.rem_euclid(*period) / period;
                let mut out = base.clone();
                for (k, amp) in sin_amp.iter().enumerate() {
                    out += amp * ((k + 1) as f64 * phase).sin();
                }
                for (k, amp) in cos_amp.iter().enumerate() {
                    out += amp * ((k + 1) as f64 * phase).cos();
                }
                Ok(out)
            }
            Coefficient::Tabulated(tab) => tab.eval(t),
        }
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            Coefficient::Periodic { period, .. } => Some(*period),
            _ => None,
        }
    }

    fn shape(&self) -> (usize, usize) {
        match self {
            Coefficient::Constant(m) => m.shape(),
            Coefficient::Periodic { base, .. } => base.shape(),
            Coefficient::Tabulated(t) => t.values[0].shape(),
        }
    }

    fn hull(&self) -> Option<(f64, f64)> {
        match self {
            Coefficient::Tabulated(t) => Some(t.hull()),
            _ => None,
        }
    }

    /// Upper bound of the spectral norm over `[lo, hi]`, sampled on `samples` points.
    pub fn sup_norm(&self, lo: f64, hi: f64, samples: usize) -> Result<f64> {
        match self {
            Coefficient::Constant(m) => Ok(spectral_norm(m)),
            _ => {
                let mut best = 0.0f64;
                for i in 0..=samples {
                    let t = lo + (hi - lo) * i as f64 / samples as f64;
                    best = best.max(spectral_norm(&self.eval(t)?));
                }
                Ok(best)
            }
        }
    }
}

/// The data `(A, B, f)` of a nonautonomous Ornstein–Uhlenbeck operator.
#[derive(Debug, Clone)]
pub struct CoefficientSystem {
    dim: usize,
    a: Coefficient,
    b: Coefficient,
    f: Coefficient,
    period: Option<f64>,
}

impl CoefficientSystem {
    pub fn new(a: Coefficient, b: Coefficient, f: Coefficient) -> Result<Self> {
        let dim = a.shape().0;
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Schema {
                field: "dim".into(),
                message: format!("dimension must lie in 1..={MAX_DIM}, got {dim}"),
            });
        }
        for (name, c, want) in [
            ("A", &a, (dim, dim)),
            ("B", &b, (dim, dim)),
            ("f", &f, (dim, 1)),
        ] {
            if c.shape() != want {
                return Err(Error::DimensionMismatch {
                    field: name.into(),
                    expected: format!("{}x{}", want.0, want.1),
                    found: format!("{}x{}", c.shape().0, c.shape().1),
                });
            }
        }
        let period = shared_period(&[&a, &b, &f]);
        Ok(Self {
            dim,
            a,
            b,
            f,
            period,
        })
    }

    /// Autonomous system with constant data.
    pub fn constant(a: Mat, b: Mat, f: Vector) -> Result<Self> {
        let n = f.len();
        Self::new(
            Coefficient::Constant(a),
            Coefficient::Constant(b),
            Coefficient::Constant(Mat::from_column_slice(n, 1, f.as_slice())),
        )
    }

    /// Scalar autonomous system `dX = (aX + c)dt + b dW`.
    pub fn scalar(a: f64, b: f64, c: f64) -> Self {
        Self::constant(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, b),
            Vector::from_element(1, c),
        )
        .expect("scalar system is well formed")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    /// Overrides the shared period (config key `period`).
    pub fn with_period(mut self, period: Option<f64>) -> Result<Self> {
        if let Some(p) = period {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::NonPositivePeriod {
                    field: "period".into(),
                    value: p,
                });
            }
        }
        self.period = period;
        Ok(self)
    }

    pub fn coefficient_a(&self) -> &Coefficient {
        &self.a
    }

    pub fn coefficient_b(&self) -> &Coefficient {
        &self.b
    }

    pub fn coefficient_f(&self) -> &Coefficient {
        &self.f
    }

    /// Intersection of the tabulated hulls, or `None` when every coefficient is global.
    pub fn hull(&self) -> Option<(f64, f64)> {
        [&self.a, &self.b, &self.f]
            .iter()
            .filter_map(|c| c.hull())
            .reduce(|x, y| (x.0.max(y.0), x.1.min(y.1)))
    }

    pub fn a(&self, t: f64) -> Result<Mat> {
        self.a.eval(t)
    }

    pub fn b(&self, t: f64) -> Result<Mat> {
        self.b.eval(t)
    }

    pub fn f(&self, t: f64) -> Result<Vector> {
        Ok(self.f.eval(t)?.column(0).into_owned())
    }

    /// `(A(t), B(t), f(t))`.
    pub fn eval(&self, t: f64) -> Result<(Mat, Mat, Vector)> {
        Ok((self.a(t)?, self.b(t)?, self.f(t)?))
    }

    /// True when all coefficients are constant.
    pub fn is_autonomous(&self) -> bool {
        [&self.a, &self.b, &self.f]
            .iter()
            .all(|c| matches!(c, Coefficient::Constant(_)))
    }
}

fn shared_period(coeffs: &[&Coefficient]) -> Option<f64> {
    let mut period = None;
    for c in coeffs {
        match c {
            Coefficient::Constant(_) => {}
            Coefficient::Periodic { period: p, .. } => match period {
                None => period = Some(*p),
                Some(q) if (q - p).abs() <= 1e-12 * q => {}
                Some(_) => return None,
            },
            Coefficient::Tabulated(_) => return None,
        }
    }
    period
}

/// Parses a system from config text (TOML, or JSON when the text starts with `{`).
pub fn parse_system(text: &str) -> Result<CoefficientSystem> {
    let value = parse_value(text)?;
    system_from_value(&value)
}

/// Parses config text into a JSON value tree.
pub fn parse_value(text: &str) -> Result<Value> {
    if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::Schema {
            field: "<root>".into(),
            message: e.to_string(),
        })
    } else {
        toml::from_str::<Value>(text).map_err(|e| Error::Schema {
            field: "<root>".into(),
            message: e.to_string(),
        })
    }
}

pub fn system_from_value(root: &Value) -> Result<CoefficientSystem> {
    let obj = root.as_object().ok_or_else(|| schema("<root>", "expected a table"))?;
    let dim = obj
        .get("dim")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema("dim", "missing or not a positive integer"))? as usize;
    if dim == 0 || dim > MAX_DIM {
        return Err(schema("dim", &format!("must lie in 1..={MAX_DIM}, got {dim}")));
    }
    let top_period = match obj.get("period") {
        None => None,
        Some(v) => {
            let p = v.as_f64().ok_or_else(|| schema("period", "not a number"))?;
            if !(p > 0.0) {
                return Err(Error::NonPositivePeriod {
                    field: "period".into(),
                    value: p,
                });
            }
            Some(p)
        }
    };
    let a = coefficient_from_value(obj.get("A"), "A", dim, Shape::Matrix, top_period)?;
    let b = coefficient_from_value(obj.get("B"), "B", dim, Shape::Matrix, top_period)?;
    let f = coefficient_from_value(obj.get("f"), "f", dim, Shape::Vector, top_period)?;
    let sys = CoefficientSystem::new(a, b, f)?;
    match top_period {
        Some(p) => sys.with_period(Some(p)),
        None => Ok(sys),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Shape {
    Matrix,
    Vector,
}

fn schema(field: &str, message: &str) -> Error {
    Error::Schema {
        field: field.into(),
        message: message.into(),
    }
}

fn coefficient_from_value(
    v: Option<&Value>,
    name: &str,
    dim: usize,
    shape: Shape,
    top_period: Option<f64>,
) -> Result<Coefficient> {
    let v = v.ok_or_else(|| schema(name, "missing coefficient"))?;
    let obj = v
        .as_object()
        .ok_or_else(|| schema(name, "expected a record with a `kind` field"))?;
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| schema(&format!("{name}.kind"), "missing or not a string"))?;
    let field = |key: &str| format!("{name}.{key}");
    let get = |key: &str| obj.get(key).ok_or_else(|| schema(&field(key), "missing"));
    match kind {
        "constant" => Ok(Coefficient::Constant(parse_entry(
            get("value")?,
            &field("value"),
            dim,
            shape,
        )?)),
        "periodic" => {
            let period = match obj.get("period") {
                Some(p) => p
                    .as_f64()
                    .ok_or_else(|| schema(&field("period"), "not a number"))?,
                None => top_period.ok_or_else(|| schema(&field("period"), "missing"))?,
            };
            if !(period > 0.0) {
                return Err(Error::NonPositivePeriod {
                    field: field("period"),
                    value: period,
                });
            }
            let base = match obj.get("base") {
                Some(b) => parse_entry(b, &field("base"), dim, shape)?,
                None => zero_entry(dim, shape),
            };
            let harmonics = |key: &str| -> Result<Vec<Mat>> {
                match obj.get(key) {
                    None => Ok(Vec::new()),
                    Some(v) => parse_harmonics(v, &field(key), dim, shape),
                }
            };
            Ok(Coefficient::Periodic {
                base,
                sin_amp: harmonics("sin_amp")?,
                cos_amp: harmonics("cos_amp")?,
                period,
            })
        }
        "tabulated" => {
            let times = get("times")?
                .as_array()
                .ok_or_else(|| schema(&field("times"), "expected an array"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| schema(&field("times"), "not a number")))
                .collect::<Result<Vec<_>>>()?;
            let values = get("values")?
                .as_array()
                .ok_or_else(|| schema(&field("values"), "expected an array"))?
                .iter()
                .enumerate()
                .map(|(i, x)| parse_entry(x, &format!("{name}.values[{i}]"), dim, shape))
                .collect::<Result<Vec<_>>>()?;
            let order = match obj.get("order").map(|o| o.as_u64()) {
                None => Interpolation::Cubic,
                Some(Some(1)) => Interpolation::Linear,
                Some(Some(3)) => Interpolation::Cubic,
                Some(_) => return Err(schema(&field("order"), "must be 1 or 3")),
            };
            Table::new(times, values, order)
                .map(Coefficient::Tabulated)
                .map_err(|e| match e {
                    Error::Schema { field: f, message } => Error::Schema {
                        field: format!("{name}.{f}"),
                        message,
                    },
                    other => other,
                })
        }
        other => Err(schema(
            &field("kind"),
            &format!("unknown kind `{other}` (expected constant, periodic or tabulated)"),
        )),
    }
}

fn zero_entry(dim: usize, shape: Shape) -> Mat {
    match shape {
        Shape::Matrix => Mat::zeros(dim, dim),
        Shape::Vector => Mat::zeros(dim, 1),
    }
}

fn depth(v: &Value) -> usize {
    match v {
        Value::Array(xs) => 1 + xs.first().map(depth).unwrap_or(0),
        _ => 0,
    }
}

fn parse_harmonics(v: &Value, field: &str, dim: usize, shape: Shape) -> Result<Vec<Mat>> {
    let single = match shape {
        Shape::Matrix => 2,
        Shape::Vector => 1,
    };
    let d = depth(v);
    if d == single || (d == 0 && dim == 1) {
        Ok(vec![parse_entry(v, field, dim, shape)?])
    } else if d == single + 1 {
        v.as_array()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(k, x)| parse_entry(x, &format!("{field}[{k}]"), dim, shape))
            .collect()
    } else {
        Err(schema(field, "expected an amplitude or a list of harmonic amplitudes"))
    }
}

/// Parses a matrix (row-major nested arrays) or a vector; a bare number is accepted when `dim == 1`.
fn parse_entry(v: &Value, field: &str, dim: usize, shape: Shape) -> Result<Mat> {
    if let Some(x) = v.as_f64() {
        if dim == 1 {
            return Ok(Mat::from_element(1, 1, x));
        }
        return Err(Error::DimensionMismatch {
            field: field.into(),
            expected: format!("{dim}-dimensional entry"),
            found: "scalar".into(),
        });
    }
    let rows = v
        .as_array()
        .ok_or_else(|| schema(field, "expected a number array"))?;
    let num = |x: &Value| x.as_f64().ok_or_else(|| schema(field, "non-numeric entry"));
    match shape {
        Shape::Vector => {
            if rows.len() != dim {
                return Err(Error::DimensionMismatch {
                    field: field.into(),
                    expected: format!("{dim}"),
                    found: format!("{}", rows.len()),
                });
            }
            let data = rows.iter().map(num).collect::<Result<Vec<_>>>()?;
            Ok(Mat::from_column_slice(dim, 1, &data))
        }
        Shape::Matrix => {
            if rows.len() != dim {
                return Err(Error::DimensionMismatch {
                    field: field.into(),
                    expected: format!("{dim}x{dim}"),
                    found: format!("{} rows", rows.len()),
                });
            }
            let mut data = Vec::with_capacity(dim * dim);
            for (i, row) in rows.iter().enumerate() {
                let row = row
                    .as_array()
                    .ok_or_else(|| schema(field, &format!("row {i} is not an array")))?;
                if row.len() != dim {
                    return Err(Error::DimensionMismatch {
                        field: field.into(),
                        expected: format!("{dim}x{dim}"),
                        found: format!("row {i} of length {}", row.len()),
                    });
                }
                for x in row {
                    data.push(num(x)?);
                }
            }
            Ok(Mat::from_row_slice(dim, dim, &data))
        }
    }
}

/// Outcome of the sampled hypothesis checks.
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    /// `min_t σ_min(B(t))` over the grid, clamped to zero below `1e-12·max‖B‖`.
    pub mu0: f64,
    pub omega0_estimate: f64,
    pub m_estimate: f64,
    pub grid: Vec<f64>,
    /// Uniform parabolicity: `‖B(t)x‖ ≥ μ₀‖x‖` with `μ₀ > 0`.
    pub parabolic: bool,
    /// Exponential stability: fitted growth bound negative.
    pub stable: bool,
}

/// Samples the ellipticity of `B` on a grid and fits the growth bound of `U` on `window`.
///
/// `step` defaults to `1e-2` of the window length.
pub fn check_hypotheses(
    sys: &CoefficientSystem,
    window: (f64, f64),
    step: Option<f64>,
) -> Result<HypothesisReport> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!("empty window [{lo}, {hi}]")));
    }
    let step = step.unwrap_or(1e-2 * (hi - lo));
    let count = ((hi - lo) / step).round().max(1.0) as usize;
    let grid: Vec<f64> = (0..=count)
        .map(|i| lo + (hi - lo) * i as f64 / count as f64)
        .collect();
    let mut mu0 = f64::INFINITY;
    let mut bmax = 0.0f64;
    for &t in &grid {
        let b = sys.b(t)?;
        mu0 = mu0.min(min_singular_value(&b));
        bmax = bmax.max(spectral_norm(&b));
    }
    if mu0 <= 1e-12 * bmax {
        mu0 = 0.0;
    }
    let mut cache = EvolutionCache::build(sys, window, None)?;
    let growth = cache.estimate_growth_bound(DEFAULT_GROWTH_PAIRS)?;
    Ok(HypothesisReport {
        mu0,
        omega0_estimate: growth.omega,
        m_estimate: growth.m,
        grid,
        parabolic: mu0 > 0.0,
        stable: growth.is_stable(),
    })
}
