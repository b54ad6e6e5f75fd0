//! Gauss–Hermite rules for the standard normal weight `e^{−x²/2}/√(2π)`.
//!
//! Nodes are the eigenvalues of the Jacobi matrix of the orthonormal Hermite
//! polynomials (off-diagonal `√k`), polished by Newton steps; weights come from
//! the Christoffel function `1/Σ p_k(x)²`. All recurrences are run with a
//! separate log scale so rules with thousands of nodes stay finite.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Largest tensor node count accepted by the quadrature routines.
pub const NODE_BUDGET: f64 = 1e7;

const RESCALE: f64 = 1e150;

/// One-dimensional Gauss–Hermite rule with probability weights.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl HermiteRule {
    pub fn level(&self) -> usize {
        self.nodes.len()
    }
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e` (`e[i]` couples `i` and `i+1`; the last entry is ignored).
fn tridiagonal_eigenvalues(d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    if n == 0 {
        return;
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

/// Orthonormal Hermite values `p_0(x), …, p_{degree}(x)` multiplied by `exp(log_scale)`.
///
/// Entries that underflow are returned as zero.
pub fn scaled_hermite(x: f64, log_scale: f64, degree: usize) -> Vec<f64> {
    let mut out = vec![0.0; degree + 1];
    smoothed_hermite_into(x, 1.0, log_scale, &mut out);
    out
}

/// Fills `out[m] = exp(log_scale)·E[p_m(x + rZ)]` for `Z ~ N(0,1)`, where `var = 1 − r²`.
///
/// Uses `e_{m+1} = (x e_m − √m·var·e_{m−1})/√(m+1)`; `var = 1` gives plain Hermite values.
pub fn smoothed_hermite_into(x: f64, var: f64, log_scale: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut log = log_scale;
    let mut factor = log.exp();
    out[0] = factor;
    for k in 0..out.len() - 1 {
        let next = (x * cur - (k as f64).sqrt() * var * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            log += RESCALE.ln();
            factor = log.exp();
        }
        out[k + 1] = cur * factor;
    }
}

/// `(p_n(x), p_{n−1}(x), log Σ_{k<n} p_k(x)²)` with the first two sharing an omitted scale.
fn recurrence(x: f64, n: usize) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum = 0.0;
    let mut log = 0.0;
    for k in 0..n {
        sum += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            sum /= RESCALE * RESCALE;
            log += 2.0 * RESCALE.ln();
        }
    }
    (cur, prev, sum.ln() + log)
}

fn compute_rule(level: usize) -> HermiteRule {
    let mut d = vec![0.0; level];
    let mut e: Vec<f64> = (1..=level).map(|k| (k as f64).sqrt()).collect();
    tridiagonal_eigenvalues(&mut d, &mut e);
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = (level as f64).sqrt();
    for x in d.iter_mut() {
        for _ in 0..3 {
            let (pn, pm, _) = recurrence(*x, level);
            if pm == 0.0 {
                break;
            }
            let dx = pn / (nf * pm);
            *x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }
    // enforce exact symmetry
    for i in 0..level / 2 {
        let j = level - 1 - i;
        let a = 0.5 * (d[j] - d[i]);
        d[i] = -a;
        d[j] = a;
    }
    if level % 2 == 1 {
        d[level / 2] = 0.0;
    }
    let mut log_weights: Vec<f64> = d.iter().map(|&x| -recurrence(x, level).2).collect();
    for i in 0..level / 2 {
        let j = level - 1 - i;
        let a = 0.5 * (log_weights[i] + log_weights[j]);
        log_weights[i] = a;
        log_weights[j] = a;
    }
    let total: f64 = log_weights.iter().map(|l| l.exp()).sum();
    let shift = total.ln();
    for l in log_weights.iter_mut() {
        *l -= shift;
    }
    let weights = log_weights.iter().map(|l| l.exp()).collect();
    HermiteRule {
        nodes: d,
        weights,
        log_weights,
    }
}

/// Cached Gauss–Hermite rule with `level` nodes.
pub fn hermite_rule(level: usize) -> Arc<HermiteRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<HermiteRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&level) {
        return rule.clone();
    }
    let rule = Arc::new(compute_rule(level.max(1)));
    cache.lock().unwrap().insert(level, rule.clone());
    rule
}

/// Tensor-product rule for `N(0, I_dim)` with `level` points per axis.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<Vector>,
    pub weights: Vec<f64>,
    pub level: usize,
}

/// Checks `level^dim` against [`NODE_BUDGET`].
pub fn check_budget(dim: usize, level: usize) -> Result<()> {
    let nodes = (level as f64).powi(dim as i32);
    if nodes > NODE_BUDGET {
        return Err(Error::Budget {
            nodes,
            limit: NODE_BUDGET,
        });
    }
    Ok(())
}

impl QuadratureRule {
    pub fn standard(dim: usize, level: usize) -> Result<Self> {
        check_budget(dim, level)?;
        let rule = hermite_rule(level);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for_each_tensor_node(&rule, dim, |z, w| {
            nodes.push(Vector::from_column_slice(z));
            weights.push(w);
        });
        Ok(Self {
            nodes,
            weights,
            level,
        })
    }
}

/// Visits every tensor node `z ∈ ℝ^dim` with its product weight, in lexicographic order.
pub fn for_each_tensor_node(rule: &HermiteRule, dim: usize, mut visit: impl FnMut(&[f64], f64)) {
    let level = rule.level();
    let mut idx = vec![0usize; dim];
    let mut z: Vec<f64> = vec![rule.nodes[0]; dim];
    loop {
        let w: f64 = idx.iter().map(|&i| rule.weights[i]).product();
        visit(&z, w);
        let mut axis = dim;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < level {
                z[axis] = rule.nodes[idx[axis]];
                break;
            }
            idx[axis] = 0;
            z[axis] = rule.nodes[0];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial_moment(k: usize) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        (1..k).step_by(2).map(|j| j as f64).product()
    }

    #[test]
    fn small_rules_closed_form() {
        let r = hermite_rule(2);
        assert!((r.nodes[1] - 1.0).abs() < 1e-15 && (r.weights[0] - 0.5).abs() < 1e-15);
        let r = hermite_rule(3);
        assert!((r.nodes[2] - 3f64.sqrt()).abs() < 1e-14);
        assert!((r.weights[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn moments_exact_to_degree() {
        for level in [4, 10, 20, 40] {
            let r = hermite_rule(level);
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for k in 0..(2 * level).min(30) {
                let q: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = double_factorial_moment(k);
                let scale: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.abs().powi(k as i32)).sum();
                assert!((q - exact).abs() <= 1e-13 * scale.max(1.0), "level {level} k {k}");
            }
        }
    }

    #[test]
    fn large_rule_is_finite_and_normalized() {
        let r = hermite_rule(800);
        assert!(r.log_weights.iter().all(|l| l.is_finite()));
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let second: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
        assert!((second - 1.0).abs() < 1e-11);
        let cosine: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * (3.0 * x).cos()).sum();
        assert!((cosine - (-4.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn scaled_hermite_orthonormal() {
        let r = hermite_rule(60);
        let deg = 30;
        let vals: Vec<Vec<f64>> = r
            .nodes
            .iter()
            .zip(&r.log_weights)
            .map(|(&x, &lw)| scaled_hermite(x, 0.5 * lw, deg))
            .collect();
        for j in 0..=deg {
            for k in 0..=deg {
                let g: f64 = vals.iter().map(|v| v[j] * v[k]).sum();
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn smoothing_matches_quadrature() {
        let r = hermite_rule(40);
        let (x, rr) = (0.7, 0.6);
        let mut exact = vec![0.0; 9];
        smoothed_hermite_into(x, 1.0 - rr * rr, 0.0, &mut exact);
        let mut quad = vec![0.0; 9];
        for (z, w) in r.nodes.iter().zip(&r.weights) {
            for (q, v) in quad.iter_mut().zip(scaled_hermite(x + rr * z, 0.0, 8)) {
                *q += w * v;
            }
        }
        for (a, b) in exact.iter().zip(&quad) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn tensor_rule_counts_and_budget() {
        let q = QuadratureRule::standard(2, 5).unwrap();
        assert_eq!(q.nodes.len(), 25);
        assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(matches!(QuadratureRule::standard(16, 40), Err(Error::Budget { .. })));
    }
}
