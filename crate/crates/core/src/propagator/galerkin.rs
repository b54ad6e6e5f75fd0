//! Hermite–Galerkin estimates of `‖D^α P_{s,t}‖` from `L²(ν_t)` to `L²(ν_s)`.
//!
//! Both spaces are pulled back to `N(0, I)` through `x = m + Σ^{1/2} w`. In those
//! coordinates the propagator maps `H_k(w)` to `E H_k(Kw + c + RZ)` with
//! `K = Σ_t^{-1/2} U Σ_s^{1/2}` and `RRᵀ = Σ_t^{-1/2} Q Σ_t^{-1/2}`. The matrix of
//! `D^α P` on the orthonormal tensor Hermite basis of total degree `≤ N` is assembled
//! by Gauss–Hermite quadrature in `w` (exact, since every integrand is a polynomial of
//! degree `≤ 2N`) and its largest singular value is returned.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::{commuted_multi_indices, MultiIndex, Provenance};
use crate::error::{Error, Result};
use crate::evolution::Flow;
use crate::gaussian::quadrature::{check_budget, hermite_rule, smoothed_hermite_into};
use crate::gaussian::{GaussianMeasure, NODE_BUDGET};
use crate::linalg::{pivoted_cholesky, spectral_norm, sym_inv_sqrt, sym_sqrt, Mat, Vector};
use crate::model::OuModel;

/// Truncation degree of the Hermite basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegreeChoice {
    Fixed(usize),
    /// Large enough to contain the dominant mode `k* ≈ |α|/(2λ)` where `e^{−λ} = ‖K‖`.
    Resolving { min: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub degree: usize,
    pub provenance: Provenance,
}

/// Largest degree accepted by [`DegreeChoice::Resolving`] by default.
pub const MAX_RESOLVING_DEGREE: usize = 2400;

/// `‖D^α P_{s,t}‖_{L²(ν_t) → L²(ν_s)}` between canonical measures.
pub fn operator_norm_estimate(
    model: &OuModel,
    s: f64,
    t: f64,
    alpha: &MultiIndex,
    degree: DegreeChoice,
) -> Result<NormEstimate> {
    let flow = model.flow(s, t)?;
    let nu_s = model.canonical(s)?;
    let nu_t = model.canonical(t)?;
    galerkin_norm(&flow, &nu_s, &nu_t, alpha, degree)
}

/// Galerkin estimate for an explicit flow and pair of reference measures.
pub fn galerkin_norm(
    flow: &Flow,
    nu_s: &GaussianMeasure,
    nu_t: &GaussianMeasure,
    alpha: &MultiIndex,
    degree: DegreeChoice,
) -> Result<NormEstimate> {
    let n = flow.g.len();
    if alpha.dim() != n || nu_s.dim() != n || nu_t.dim() != n {
        return Err(Error::Dimension("measures, flow and multi-index disagree".into()));
    }
    MultiIndex::new(alpha.0.clone())?;
    let root_s = sym_sqrt(nu_s.cov())?;
    let inv_root_t = sym_inv_sqrt(nu_t.cov())?;
    let g_mat = &inv_root_t * &flow.u;
    let k_mat = &g_mat * &root_s;
    let offset = &inv_root_t * (&flow.u * nu_s.mean() + &flow.g - nu_t.mean());
    let (q_factor, _) = pivoted_cholesky(&flow.q);
    let r_mat = &inv_root_t * q_factor;
    let smoothing = &r_mat * r_mat.transpose();

    let order = alpha.order();
    let degree = match degree {
        DegreeChoice::Fixed(d) => d,
        DegreeChoice::Resolving { min, max } => {
            let kappa = spectral_norm(&k_mat);
            let wanted = if order == 0 {
                min
            } else if kappa < 1.0 {
                let k_star = order as f64 / (-2.0 * kappa.ln());
                (1.25 * k_star).ceil() as usize + order + 2
            } else {
                max
            };
            wanted.clamp(min, max)
        }
    };
    if degree < order.max(1) {
        return Err(Error::InvalidArgument(format!("degree {degree} below derivative order {order}")));
    }

    let basis = total_degree_basis(n, degree);
    let index: HashMap<&[u16], usize> = basis.iter().enumerate().map(|(i, b)| (b.as_slice(), i)).collect();
    let derivs = commuted_multi_indices(&g_mat, alpha);
    // column k of D^α P: Σ_β c_β γ(k, β) E H_{k−β}
    let mut columns: Vec<Vec<(usize, f64)>> = Vec::with_capacity(basis.len());
    for k in &basis {
        let mut col = Vec::new();
        for (beta, c) in &derivs {
            if k.iter().zip(&beta.0).any(|(&ki, &bi)| ki < bi as u16) {
                continue;
            }
            let mut gamma = *c;
            let mut lowered = k.clone();
            for i in 0..n {
                for j in 0..beta.0[i] as u16 {
                    gamma *= ((k[i] - j) as f64).sqrt();
                }
                lowered[i] -= beta.0[i] as u16;
            }
            col.push((index[lowered.as_slice()], gamma));
        }
        columns.push(col);
    }

    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || smoothing[(i, j)].abs() <= 1e-14));
    let w_level = degree + 1;
    let z_level = degree / 2 + 1;
    check_budget(n, w_level)?;
    let work = (w_level as f64).powi(n as i32) * if diagonal { 1.0 } else { (z_level as f64).powi(n as i32) };
    if work > NODE_BUDGET {
        return Err(Error::Budget {
            nodes: work,
            limit: NODE_BUDGET,
        });
    }
    let w_rule = hermite_rule(w_level);
    let z_rule = hermite_rule(z_level);
    let nodes = w_level.pow(n as u32);
    let mut basis_vals = DMatrix::<f64>::zeros(nodes, basis.len());
    let mut image_vals = DMatrix::<f64>::zeros(nodes, basis.len());

    let mut w_idx = vec![0usize; n];
    let mut axis_vals = vec![vec![0.0; degree + 1]; n];
    let mut smooth_vals = vec![vec![0.0; degree + 1]; n];
    let mut expect = vec![0.0; basis.len()];
    for node in 0..nodes {
        let mut rem = node;
        for i in (0..n).rev() {
            w_idx[i] = rem % w_level;
            rem /= w_level;
        }
        let w = Vector::from_fn(n, |i, _| w_rule.nodes[w_idx[i]]);
        let half_logs: Vec<f64> = (0..n).map(|i| 0.5 * w_rule.log_weights[w_idx[i]]).collect();
        for i in 0..n {
            smoothed_hermite_into(w[i], 1.0, half_logs[i], &mut axis_vals[i]);
        }
        for (b, m) in basis.iter().enumerate() {
            basis_vals[(node, b)] = (0..n).map(|i| axis_vals[i][m[i] as usize]).product();
        }
        let a = &k_mat * &w + &offset;
        expect.iter_mut().for_each(|e| *e = 0.0);
        if diagonal {
            for i in 0..n {
                smoothed_hermite_into(a[i], 1.0 - smoothing[(i, i)], half_logs[i], &mut smooth_vals[i]);
            }
            for (b, m) in basis.iter().enumerate() {
                expect[b] = (0..n).map(|i| smooth_vals[i][m[i] as usize]).product();
            }
        } else {
            let z_nodes = z_level.pow(n as u32);
            let mut z_idx = vec![0usize; n];
            for zn in 0..z_nodes {
                let mut rem = zn;
                for i in (0..n).rev() {
                    z_idx[i] = rem % z_level;
                    rem /= z_level;
                }
                let z = Vector::from_fn(n, |i, _| z_rule.nodes[z_idx[i]]);
                let y = &a + &r_mat * z;
                for i in 0..n {
                    let log = half_logs[i] + z_rule.log_weights[z_idx[i]];
                    smoothed_hermite_into(y[i], 1.0, log, &mut smooth_vals[i]);
                }
                for (b, m) in basis.iter().enumerate() {
                    expect[b] += (0..n).map(|i| smooth_vals[i][m[i] as usize]).product::<f64>();
                }
            }
        }
        for (k, col) in columns.iter().enumerate() {
            image_vals[(node, k)] = col.iter().map(|&(l, gamma)| gamma * expect[l]).sum();
        }
    }
    let matrix = basis_vals.transpose() * image_vals;
    Ok(NormEstimate {
        value: largest_singular_value(&matrix),
        degree,
        provenance: Provenance::Quadrature { level: w_level },
    })
}


/// Multi-indices of total degree `≤ degree`, graded.
fn total_degree_basis(n: usize, degree: usize) -> Vec<Vec<u16>> {
    fn rec(n: usize, left: usize, cur: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
        if cur.len() == n - 1 {
            cur.push(left as u16);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for take in (0..=left).rev() {
            cur.push(take as u16);
            rec(n, left - take, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for k in 0..=degree {
        rec(n, k, &mut Vec::new(), &mut out);
    }
    out
}

/// Largest singular value: dense SVD for small matrices, Golub–Kahan–Lanczos otherwise.
pub fn largest_singular_value(m: &Mat) -> f64 {
    let size = m.nrows().min(m.ncols());
    if size <= 200 {
        return m.singular_values().iter().cloned().fold(0.0, f64::max);
    }
    let mut steps = 60.min(size);
    let mut last = f64::NAN;
    loop {
        let value = lanczos_top(m, steps);
        if (value - last).abs() <= 1e-12 * value || steps == size {
            return value;
        }
        last = value;
        steps = (2 * steps).min(size);
    }
}

fn lanczos_top(m: &Mat, steps: usize) -> f64 {
    let cols = m.ncols();
    let mut v = Vector::from_fn(cols, |i, _| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75).sin());
    v /= v.norm();
    let mut vs: Vec<Vector> = Vec::with_capacity(steps + 1);
    let mut us: Vec<Vector> = Vec::with_capacity(steps);
    let mut alphas: Vec<f64> = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    vs.push(v);
    for j in 0..steps {
        let mut u = m * &vs[j];
        if j > 0 {
            u.axpy(-betas[j - 1], &us[j - 1], 1.0);
        }
        for prev in &us {
            let d = prev.dot(&u);
            u.axpy(-d, prev, 1.0);
        }
        let a = u.norm();
        alphas.push(a);
        if a <= 1e-300 {
            break;
        }
        u /= a;
        let mut next = m.tr_mul(&u);
        next.axpy(-a, &vs[j], 1.0);
        for prev in &vs {
            let d = prev.dot(&next);
            next.axpy(-d, prev, 1.0);
        }
        us.push(u);
        let b = next.norm();
        if b <= 1e-14 * a || j + 1 == steps {
            break;
        }
        betas.push(b);
        next /= b;
        vs.push(next);
    }
    let k = alphas.len();
    let mut bidiag = Mat::zeros(k, k);
    for i in 0..k {
        bidiag[(i, i)] = alphas[i];
        if i + 1 < k {
            bidiag[(i, i + 1)] = betas[i];
        }
    }
    bidiag.singular_values().iter().cloned().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientSystem;
    use std::f64::consts::SQRT_2;

    fn bench() -> OuModel {
        OuModel::with_defaults(CoefficientSystem::scalar(-1.0, SQRT_2, 0.0), (0.0, 2.0)).unwrap()
    }

    fn spectral(order: usize, gap: f64) -> f64 {
        (order..4000)
            .map(|k| {
                let falling: f64 = (0..order).map(|j| (k - j) as f64).product();
                falling.sqrt() * (-(k as f64) * gap).exp()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn autonomous_first_derivative_at_unit_gap() {
        let m = bench();
        let est = operator_norm_estimate(&m, 0.0, 1.0, &MultiIndex(vec![1]), DegreeChoice::Fixed(12)).unwrap();
        assert!((est.value - (-1f64).exp()).abs() < 1e-6, "{}", est.value);
    }

    #[test]
    fn zeroth_order_is_a_contraction_attained_by_constants() {
        let m = bench();
        for gap in [0.1, 1.0] {
            let est = operator_norm_estimate(&m, 0.0, gap, &MultiIndex(vec![0]), DegreeChoice::Fixed(8)).unwrap();
            assert!((est.value - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_in_degree() {
        let m = bench();
        let mut last = 0.0;
        for d in [4, 8, 12] {
            let v = operator_norm_estimate(&m, 0.0, 0.05, &MultiIndex(vec![1]), DegreeChoice::Fixed(d))
                .unwrap()
                .value;
            assert!(v >= last - 1e-12);
            last = v;
        }
    }

    #[test]
    fn resolving_degree_matches_spectrum() {
        let m = bench();
        for (order, gap) in [(1, 0.01), (2, 0.02), (1, 0.002)] {
            let est = operator_norm_estimate(
                &m,
                0.0,
                gap,
                &MultiIndex(vec![order as u8]),
                DegreeChoice::Resolving { min: 12, max: MAX_RESOLVING_DEGREE },
            )
            .unwrap();
            let want = spectral(order, gap);
            assert!(((est.value - want) / want).abs() < 1e-6, "{order} {gap}: {} vs {want}", est.value);
        }
    }

    #[test]
    fn two_dimensional_rotation_invariance() {
        // isotropic system: the norm equals the scalar one
        let sys = CoefficientSystem::constant(
            Mat::from_row_slice(2, 2, &[-1.0, 0.7, -0.7, -1.0]),
            Mat::identity(2, 2) * SQRT_2,
            Vector::zeros(2),
        )
        .unwrap();
        let m = OuModel::with_defaults(sys, (0.0, 1.0)).unwrap();
        let est = operator_norm_estimate(&m, 0.0, 0.5, &MultiIndex(vec![1, 0]), DegreeChoice::Fixed(10)).unwrap();
        assert!((est.value - spectral(1, 0.5)).abs() < 1e-8, "{}", est.value);
    }

    #[test]
    fn lanczos_agrees_with_dense_svd() {
        let m = Mat::from_fn(260, 250, |i, j| ((i * 7 + j * 3) as f64).sin() / (1.0 + (i as f64 - j as f64).abs()));
        let dense = m.singular_values().iter().cloned().fold(0.0, f64::max);
        assert!((largest_singular_value(&m) - dense).abs() < 1e-10 * dense);
    }
}
