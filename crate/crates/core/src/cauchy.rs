//! Backward Cauchy problem `∂_s u + ℒ(s)u = h` on `[T1, T2]` with `u(T2) = φ`, solved by
//! variation of constants
//!
//! ```text
//! u(s) = P_{s,T2}φ − ∫_s^{T2} P_{s,r} h(r) dr,
//! ```
//!
//! together with the PDE residual, the regularity ratio and the identities satisfied by
//! `𝒢 = ∂_t + ℒ(t)` against the canonical family.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::evolution::{EvolutionCache, Flow};
use crate::gaussian::GaussianMeasure;
use crate::linalg::{Mat, Vector};
use crate::model::OuModel;
use crate::poly::Poly;
use crate::propagator::{apply_flow, propagate_term, ApplyOptions, TestFunction, TrigTerm};
use crate::spaces::{
    canonical_norm, canonical_trace_norm, simpson_weights, uniform_grid, NormKind, NormSpec, Representation,
    SpaceTimeFunction, TrigExpTerm,
};
use crate::C64;

/// Default solver resolution.
pub const NODES_PER_UNIT: f64 = 200.0;

/// Ratios with a denominator below this are undefined.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct BackwardProblem {
    pub window: (f64, f64),
    /// Terminal datum at `T2`.
    pub phi: TestFunction,
    pub h: SpaceTimeFunction,
    /// Solver time nodes, endpoints included.
    pub nodes: usize,
}

impl BackwardProblem {
    /// `nodes = None` picks [`NODES_PER_UNIT`] nodes per unit of time.
    pub fn new(window: (f64, f64), phi: TestFunction, h: SpaceTimeFunction, nodes: Option<usize>) -> Result<Self> {
        let (t1, t2) = window;
        if !(t1 < t2) {
            return Err(Error::InvalidArgument(format!("empty window [{t1}, {t2}]")));
        }
        if phi.dim() != h.dim() {
            return Err(Error::Dimension(format!(
                "terminal datum of {} variables, forcing of {}",
                phi.dim(),
                h.dim()
            )));
        }
        let (h1, h2) = h.window();
        let tol = 1e-9 * (t2 - t1).max(1.0);
        if h.period().is_none() && (h1 > t1 + tol || h2 < t2 - tol) {
            return Err(Error::OutOfRange { t: t1, lo: h1, hi: h2 });
        }
        let nodes = nodes.unwrap_or_else(|| ((t2 - t1) * NODES_PER_UNIT).ceil() as usize + 1);
        if nodes < 3 {
            return Err(Error::InvalidArgument(format!("{nodes} solver nodes, at least 3 needed")));
        }
        Ok(Self { window, phi, h, nodes })
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.window.0, self.window.1, self.nodes)
    }

    pub fn with_nodes(&self, nodes: usize) -> Result<Self> {
        Self::new(self.window, self.phi.clone(), self.h.clone(), Some(nodes))
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.window != other.window {
            return Err(Error::InvalidArgument("problems on different windows".into()));
        }
        let grid = self.grid();
        let h = self.forcing_on(&grid)?.scale(a).add(&other.forcing_on(&grid)?.scale(b))?;
        let phi = add_functions(&[self.phi.scale(a), other.phi.scale(b)]);
        Self::new(self.window, phi, h, Some(self.nodes))
    }

    /// The forcing restricted to `grid` (no period attached).
    pub fn forcing_on(&self, grid: &[f64]) -> Result<SpaceTimeFunction> {
        match self.h.representation() {
            Representation::TrigExp(terms) => {
                SpaceTimeFunction::trig_exp(self.dim(), grid.to_vec(), terms.clone(), None)
            }
            Representation::Nodal(_) => {
                let values = grid.iter().map(|&t| self.h.at_time(t)).collect::<Result<Vec<_>>>()?;
                SpaceTimeFunction::nodal(grid.to_vec(), values, None)
            }
        }
    }
}

/// Sum of functions, staying inside a class whenever all summands share it.
fn add_functions(parts: &[TestFunction]) -> TestFunction {
    let mut trig: Vec<TrigTerm> = Vec::new();
    let mut poly: Option<Poly> = None;
    let mut other: Option<TestFunction> = None;
    for p in parts {
        match p {
            TestFunction::Trig(terms) => trig.extend(terms.iter().filter(|t| t.coeff != C64::new(0.0, 0.0)).cloned()),
            TestFunction::Polynomial(q) => {
                poly = Some(match poly {
                    None => q.clone(),
                    Some(acc) => acc + q.clone(),
                })
            }
            TestFunction::BlackBox(_) => {
                other = Some(match other {
                    None => p.clone(),
                    Some(acc) => acc.add(p),
                })
            }
        }
    }
    let mut classes: Vec<TestFunction> = Vec::new();
    if !trig.is_empty() {
        classes.push(TestFunction::Trig(trig));
    }
    if let Some(p) = poly {
        classes.push(TestFunction::Polynomial(p));
    }
    classes.extend(other);
    match classes.len() {
        0 => parts[0].scale(0.0),
        1 => classes.pop().unwrap(),
        _ => {
            let first = classes[0].clone();
            classes[1..].iter().fold(first, |acc, f| acc.add(f))
        }
    }
}

/// Flows between all ordered pairs of nodes of a uniform grid, shared by every
/// problem solved on that grid.
#[derive(Debug, Clone)]
pub struct DuhamelPlan {
    grid: Vec<f64>,
    /// `flows[i][j] = flow(grid[i], grid[i + j])`.
    flows: Vec<Vec<Flow>>,
    opts: ApplyOptions,
}

impl DuhamelPlan {
    pub fn new(cache: &EvolutionCache, window: (f64, f64), nodes: usize, opts: ApplyOptions) -> Result<Self> {
        let grid = uniform_grid(window.0, window.1, nodes);
        let m = grid.len() - 1;
        let steps = grid.windows(2).map(|w| cache.flow(w[0], w[1])).collect::<Result<Vec<_>>>()?;
        let n = cache.dim();
        let flows = (0..=m)
            .map(|i| {
                let mut row = Vec::with_capacity(m - i + 1);
                row.push(Flow::identity(n));
                for step in &steps[i..] {
                    let next = row.last().unwrap().then(step);
                    row.push(next);
                }
                row
            })
            .collect();
        Ok(Self { grid, flows, opts })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Node values of `u` for `prob`, whose grid must coincide with the plan's.
    pub fn solve(&self, prob: &BackwardProblem) -> Result<SpaceTimeFunction> {
        let grid = prob.grid();
        if grid.len() != self.grid.len() || grid.iter().zip(&self.grid).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(Error::InvalidArgument("problem grid differs from the plan grid".into()));
        }
        let m = grid.len() - 1;
        let forcing = grid.iter().map(|&t| prob.h.at_time(t)).collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(m + 1);
        for i in 0..=m {
            if i == m {
                values.push(prob.phi.clone());
                continue;
            }
            let row = &self.flows[i];
            let weights = simpson_weights(&grid[i..]);
            let mut parts = Vec::with_capacity(m - i + 2);
            parts.push(apply_flow(&row[m - i], &prob.phi, &self.opts)?.into_function());
            for (j, w) in weights.iter().enumerate() {
                parts.push(apply_flow(&row[j], &forcing[i + j], &self.opts)?.into_function().scale(-w));
            }
            values.push(add_functions(&parts));
        }
        SpaceTimeFunction::nodal(grid, values, None)
    }
}

/// `u` on the problem grid; `u(T2) = φ` exactly.
pub fn solve_backward(cache: &EvolutionCache, prob: &BackwardProblem, opts: &ApplyOptions) -> Result<SpaceTimeFunction> {
    DuhamelPlan::new(cache, prob.window, prob.nodes, *opts)?.solve(prob)
}

fn generator_data(model: &OuModel, t: f64) -> Result<(Mat, Mat, Vector)> {
    let (a, b, f) = model.system().eval(t)?;
    let bbt = &b * b.transpose();
    Ok((a, bbt, f))
}

/// `(Σ_i w_i ∫ |r_i|² dν_{t_i})^{1/2}` over a time grid.
fn space_time_l2(
    model: &OuModel,
    grid: &[f64],
    level: usize,
    mut pointwise: impl FnMut(usize, &Vector) -> C64,
) -> Result<f64> {
    let weights = simpson_weights(grid);
    let mut total = 0.0;
    for (i, (&t, &w)) in grid.iter().zip(&weights).enumerate() {
        let nu = model.canonical(t)?;
        let mut acc = 0.0;
        nu.for_each_node(level, |x, q| acc += q * pointwise(i, x).norm_sqr())?;
        total += w * acc;
    }
    Ok(total.max(0.0).sqrt())
}

/// `‖∂_s u + ℒ(s)u − h‖` in `L²((T1,T2) × ℝⁿ, ν)`.
pub fn residual(u: &SpaceTimeFunction, prob: &BackwardProblem, model: &OuModel, level: usize) -> Result<f64> {
    let grid = u.grid().to_vec();
    let h = prob.forcing_on(&grid)?;
    let data = grid.iter().map(|&t| generator_data(model, t)).collect::<Result<Vec<_>>>()?;
    let values: Vec<TestFunction> = (0..grid.len()).map(|i| u.node_value(i)).collect();
    space_time_l2(model, &grid, level, |i, x| {
        let (a, bbt, f) = &data[i];
        u.time_derivative(i, x) + values[i].generator_at(a, bbt, f, x) - h.value(i, x)
    })
}

/// Residual of `s ↦ P_{s,T2}φ` for a trigonometric `φ`, with `∂_s` taken analytically
/// from the flow.
pub fn homogeneous_residual(model: &OuModel, phi: &[TrigTerm], window: (f64, f64), nodes: usize, level: usize) -> Result<f64> {
    let grid = uniform_grid(window.0, window.1, nodes);
    let t2 = window.1;
    let mut slices = Vec::with_capacity(grid.len());
    for &s in &grid {
        let flow = model.flow(s, t2)?;
        let (a, b, f) = model.system().eval(s)?;
        let bbt = &b * b.transpose();
        let terms: Vec<(TrigTerm, C64, Vector)> = phi
            .iter()
            .map(|term| {
                let p = propagate_term(&flow, term);
                // ∂_s log of the propagated term: constant part and x-linear part
                let uf = &flow.u * &f;
                let bk = b.transpose() * &p.freq;
                let c = C64::new(0.5 * bk.norm_squared(), -term.freq.dot(&uf));
                let lin = a.transpose() * &p.freq;
                (p, c, lin)
            })
            .collect();
        slices.push((terms, a, bbt, f));
    }
    space_time_l2(model, &grid, level, |i, x| {
        let (terms, a, bbt, f) = &slices[i];
        let mut out = C64::new(0.0, 0.0);
        for (p, c, lin) in terms {
            let v = p.eval(x);
            out += v * (c - C64::i() * lin.dot(x));
        }
        let field = TestFunction::Trig(terms.iter().map(|(p, _, _)| p.clone()).collect());
        out + field.generator_at(a, bbt, f, x)
    })
}

/// `‖u‖_{H^{1,2}(ν)} / (‖h‖_{L²(ν)} + ‖φ‖_{H¹(ν_{T2})})`.
/// `‖h‖_{L²(ν)} + ‖φ‖_{H¹(ν_{T2})}` on the problem's own grid.
pub fn data_norm(prob: &BackwardProblem, model: &OuModel, level: usize) -> Result<f64> {
    let h = prob.forcing_on(&prob.grid())?;
    Ok(canonical_norm(&h, &NormSpec::l2(level), model)? + canonical_trace_norm(&prob.phi, prob.window.1, model, level)?)
}

pub fn regularity_ratio(u: &SpaceTimeFunction, prob: &BackwardProblem, model: &OuModel, level: usize) -> Result<f64> {
    let top = canonical_norm(u, &NormSpec::new(NormKind::H12, level)?, model)?;
    let bottom = data_norm(prob, model, level)?;
    if bottom < DEGENERATE_DENOMINATOR {
        return Err(Error::UndefinedRatio(bottom));
    }
    Ok(top / bottom)
}

/// `max |[ℒ(s), D]P_{s,t}φ(x) + A(s)ᵀU(t,s)ᵀ(P_{s,t}Dφ)(x)|` over `points`.
pub fn commutator_residual(model: &OuModel, s: f64, t: f64, phi: &Poly, points: &[Vector]) -> Result<f64> {
    let n = phi.dim();
    let flow = model.flow(s, t)?;
    let (a, bbt, f) = generator_data(model, s)?;
    let v = phi.gaussian_average(&flow.u, &flow.g, &flow.q)?;
    let lv = v.apply_generator(&a, &bbt, &f);
    let pd = (0..n)
        .map(|j| phi.derivative(j).gaussian_average(&flow.u, &flow.g, &flow.q))
        .collect::<Result<Vec<_>>>()?;
    let couple = a.transpose() * flow.u.transpose();
    let mut worst: f64 = 0.0;
    for x in points {
        let xs = x.as_slice();
        let w = Vector::from_iterator(n, pd.iter().map(|p| p.eval(xs)));
        let expected = -(&couple * w);
        for j in 0..n {
            let lhs = v.derivative(j).apply_generator(&a, &bbt, &f).eval(xs) - lv.derivative(j).eval(xs);
            worst = worst.max((lhs - expected[j]).abs());
        }
    }
    Ok(worst)
}

fn space_time_generator(terms: &[TrigExpTerm], model: &OuModel, t: f64, x: &Vector) -> Result<C64> {
    let (a, bbt, f) = generator_data(model, t)?;
    let mut out = C64::new(0.0, 0.0);
    for term in terms {
        out += term.time_derivative(t, x);
        out += TestFunction::Trig(vec![term.at(t)]).generator_at(&a, &bbt, &f, x);
    }
    Ok(out)
}

fn trig_value(terms: &[TrigExpTerm], t: f64, x: &Vector) -> C64 {
    terms.iter().map(|term| term.at(t).eval(x)).sum()
}

fn diffusion_pairing(g: &[TrigExpTerm], h: &[TrigExpTerm], b: &Mat, t: f64, x: &Vector) -> C64 {
    let lift = |terms: &[TrigExpTerm]| TestFunction::Trig(terms.iter().map(|term| term.at(t)).collect());
    let bt = b.transpose().map(|v| C64::new(v, 0.0));
    let dg = &bt * lift(g).gradient(x);
    let dh = &bt * lift(h).gradient(x);
    dg.iter().zip(dh.iter()).map(|(p, q)| p * q).sum()
}

/// `|𝒢(gh) − g𝒢h − h𝒢g − ⟨B*Dg, B*Dh⟩|` at `(t, x)`, with `gh` expanded term by term.
pub fn product_rule_residual(model: &OuModel, g: &[TrigExpTerm], h: &[TrigExpTerm], t: f64, x: &Vector) -> Result<f64> {
    let mut product = Vec::with_capacity(g.len() * h.len());
    for p in g {
        for q in h {
            product.push(p.mul(q)?);
        }
    }
    let b = model.system().b(t)?;
    let lhs = space_time_generator(&product, model, t, x)?;
    let rhs = trig_value(g, t, x) * space_time_generator(h, model, t, x)?
        + trig_value(h, t, x) * space_time_generator(g, model, t, x)?
        + diffusion_pairing(g, h, &b, t, x);
    Ok((lhs - rhs).norm())
}

/// `Re(Φe^{i⟨h,x⟩})` as a sum of terms.
pub fn real_part(terms: &[TrigExpTerm]) -> Vec<TrigExpTerm> {
    let half = C64::new(0.5, 0.0);
    terms
        .iter()
        .flat_map(|term| {
            let mut a = term.clone();
            a.amplitude = a.amplitude.scale(half);
            let b = a.conj();
            [a, b]
        })
        .collect()
}

/// Mean over one period `[t0, t0+T)` of `∫ F(t, x) dν_t(x)`, by the periodic trapezoid rule.
fn periodic_mean(
    model: &OuModel,
    t0: f64,
    nodes: usize,
    level: usize,
    integrand: impl Fn(f64, &Vector) -> Result<C64>,
) -> Result<C64> {
    let period = model
        .system()
        .period()
        .ok_or_else(|| Error::InvalidArgument("periodic identity on a non-periodic system".into()))?;
    let mut total = C64::new(0.0, 0.0);
    for k in 0..nodes {
        let t = t0 + period * k as f64 / nodes as f64;
        let nu: GaussianMeasure = model.canonical(t)?;
        let err = RefCell::new(None);
        let value = nu.expectation(
            |x| {
                integrand(t, x).unwrap_or_else(|e| {
                    err.borrow_mut().get_or_insert(e);
                    C64::new(0.0, 0.0)
                })
            },
            level,
        )?;
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        total += value;
    }
    Ok(total / nodes as f64)
}

/// `|mean ∫ (g𝒢h + h𝒢g + ⟨B*Dg, B*Dh⟩) dν|` over one period.
pub fn integrated_product_residual(
    model: &OuModel,
    g: &[TrigExpTerm],
    h: &[TrigExpTerm],
    t0: f64,
    nodes: usize,
    level: usize,
) -> Result<f64> {
    let v = periodic_mean(model, t0, nodes, level, |t, x| {
        let b = model.system().b(t)?;
        Ok(trig_value(g, t, x) * space_time_generator(h, model, t, x)?
            + trig_value(h, t, x) * space_time_generator(g, model, t, x)?
            + diffusion_pairing(g, h, &b, t, x))
    })?;
    Ok(v.norm())
}

/// `|mean ∫ u𝒢u dν + ½ mean ∫ |B*Du|² dν|` over one period for real `u`.
pub fn dissipativity_residual(model: &OuModel, u: &[TrigExpTerm], t0: f64, nodes: usize, level: usize) -> Result<f64> {
    let v = periodic_mean(model, t0, nodes, level, |t, x| {
        let b = model.system().b(t)?;
        Ok(trig_value(u, t, x) * space_time_generator(u, model, t, x)? + diffusion_pairing(u, u, &b, t, x) * 0.5)
    })?;
    Ok(v.norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEnergy {
    /// `‖Dφ‖²_{ν_{T2}} − ‖DP_{T1,T2}φ‖²_{ν_{T1}}`.
    pub boundary: f64,
    /// `∫∫ (|B*D²P_{s,T2}φ|² − 2⟨A DP_{s,T2}φ, DP_{s,T2}φ⟩) dν_s ds`.
    pub interior: f64,
}

impl GradientEnergy {
    pub fn residual(&self) -> f64 {
        (self.boundary - self.interior).abs()
    }
}

/// Both sides of the gradient-energy balance for `u(s) = P_{s,T2}φ`.
pub fn gradient_energy(model: &OuModel, phi: &Poly, window: (f64, f64), nodes: usize, level: usize) -> Result<GradientEnergy> {
    let n = phi.dim();
    let (t1, t2) = window;
    let propagated = |s: f64| -> Result<Poly> {
        let flow = model.flow(s, t2)?;
        phi.gaussian_average(&flow.u, &flow.g, &flow.q)
    };
    let grad_energy = |v: &Poly, t: f64| -> Result<f64> {
        let grad = v.gradient();
        model
            .canonical(t)?
            .expectation_real(|x| grad.iter().map(|d| d.eval(x.as_slice()).powi(2)).sum(), level)
    };
    let boundary = grad_energy(phi, t2)? - grad_energy(&propagated(t1)?, t1)?;

    let grid = uniform_grid(t1, t2, nodes);
    let weights = simpson_weights(&grid);
    let mut interior = 0.0;
    for (&s, &w) in grid.iter().zip(&weights) {
        let v = propagated(s)?;
        let (a, b, _) = model.system().eval(s)?;
        let grad = v.gradient();
        let hess: Vec<Vec<Poly>> = grad.iter().map(|d| d.gradient()).collect();
        let density = model.canonical(s)?.expectation_real(
            |x| {
                let xs = x.as_slice();
                let dv = Vector::from_iterator(n, grad.iter().map(|d| d.eval(xs)));
                let d2 = Mat::from_fn(n, n, |i, j| hess[i][j].eval(xs));
                (b.transpose() * d2).norm_squared() - 2.0 * (&a * &dv).dot(&dv)
            },
            level,
        )?;
        interior += w * density;
    }
    Ok(GradientEnergy { boundary, interior })
}
