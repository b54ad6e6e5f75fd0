//! Sparse multivariate polynomials with real coefficients.
//!
//! Besides ring arithmetic this supports affine substitution, exact Gaussian
//! averaging `x ↦ E p(Ux + g + Y)` with `Y ~ N(0, Q)` through Isserlis' theorem
//! (total degree at most four), and application of the Ornstein–Uhlenbeck
//! generator, which maps polynomials to polynomials of the same degree.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// Largest total degree for which Gaussian averages are supported.
pub const MAX_GAUSSIAN_DEGREE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<Vec<u8>, f64>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; dim], c);
        p
    }

    /// The coordinate `x_i`.
    pub fn var(dim: usize, i: usize) -> Self {
        let mut e = vec![0; dim];
        e[i] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn monomial(exponents: Vec<u8>, c: f64) -> Self {
        let mut p = Self::zero(exponents.len());
        p.add_term(exponents, c);
        p
    }

    /// `⟨v, x⟩ + c`.
    pub fn linear(v: &[f64], c: f64) -> Self {
        let n = v.len();
        let mut p = Self::constant(n, c);
        for (i, &vi) in v.iter().enumerate() {
            p = p + Self::var(n, i).scale(vi);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u8], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&k| k as usize).sum())
            .max()
            .unwrap_or(0)
    }

    fn add_term(&mut self, e: Vec<u8>, c: f64) {
        if c == 0.0 {
            return;
        }
        let sum = self.terms.get(&e).copied().unwrap_or(0.0) + c;
        if sum == 0.0 {
            self.terms.remove(&e);
        } else {
            self.terms.insert(e, sum);
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        if c == 0.0 {
            return Self::zero(self.dim);
        }
        Self {
            dim: self.dim,
            terms: self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u8> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u8) -> Poly {
        let mut out = Poly::constant(self.dim, 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&k, &xi)| xi.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// `∂p/∂x_i`.
    pub fn derivative(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut d = e.clone();
                d[i] -= 1;
                out.add_term(d, c * e[i] as f64);
            }
        }
        out
    }

    /// Partial derivative of multi-index order `alpha`.
    pub fn derivative_multi(&self, alpha: &[u8]) -> Poly {
        let mut p = self.clone();
        for (i, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                p = p.derivative(i);
            }
        }
        p
    }

    pub fn gradient(&self) -> Vec<Poly> {
        (0..self.dim).map(|i| self.derivative(i)).collect()
    }

    /// `p(Mx + c)` as a polynomial in `x` (with `M` of shape `dim × m`).
    pub fn substitute_affine(&self, m: &Mat, c: &Vector) -> Poly {
        let inner = m.ncols();
        let forms: Vec<Poly> = (0..self.dim)
            .map(|i| {
                let row: Vec<f64> = m.row(i).iter().copied().collect();
                Poly::linear(&row, c[i])
            })
            .collect();
        let mut out = Poly::zero(inner);
        for (e, coef) in &self.terms {
            let mut term = Poly::constant(inner, *coef);
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    term = term.mul(&forms[i].pow(k));
                }
            }
            out = out + term;
        }
        out
    }

    /// `x ↦ E p(Ux + g + Y)` for `Y ~ N(0, Q)`, exact via Isserlis' theorem.
    pub fn gaussian_average(&self, u: &Mat, g: &Vector, q: &Mat) -> Result<Poly> {
        let deg = self.degree();
        if deg > MAX_GAUSSIAN_DEGREE {
            return Err(Error::Unsupported(format!(
                "polynomial of degree {deg} exceeds the exact Gaussian limit {MAX_GAUSSIAN_DEGREE}"
            )));
        }
        let n = self.dim;
        // variables (x_1..x_n, y_1..y_n)
        let forms: Vec<Poly> = (0..n)
            .map(|i| {
                let mut coeffs = vec![0.0; 2 * n];
                for j in 0..n {
                    coeffs[j] = u[(i, j)];
                }
                coeffs[n + i] = 1.0;
                Poly::linear(&coeffs, g[i])
            })
            .collect();
        let mut joint = Poly::zero(2 * n);
        for (e, coef) in &self.terms {
            let mut term = Poly::constant(2 * n, *coef);
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    term = term.mul(&forms[i].pow(k));
                }
            }
            joint = joint + term;
        }
        let mut out = Poly::zero(n);
        for (e, coef) in &joint.terms {
            let mut idx = Vec::new();
            for (i, &k) in e[n..].iter().enumerate() {
                for _ in 0..k {
                    idx.push(i);
                }
            }
            let moment = isserlis(&idx, q);
            out.add_term(e[..n].to_vec(), coef * moment);
        }
        Ok(out)
    }

    /// `E p(Y)` for `Y ~ N(m, Q)`.
    pub fn expectation(&self, m: &Vector, q: &Mat) -> Result<f64> {
        let n = self.dim;
        Ok(self
            .gaussian_average(&Mat::zeros(n, n), m, q)?
            .eval(&vec![0.0; n]))
    }

    /// `½ Tr(BBᵀ D²p) + ⟨Ax + f, Dp⟩`.
    pub fn apply_generator(&self, a: &Mat, bbt: &Mat, f: &Vector) -> Poly {
        let n = self.dim;
        let mut out = Poly::zero(n);
        let grad = self.gradient();
        for i in 0..n {
            for j in 0..n {
                if bbt[(i, j)] != 0.0 {
                    out = out + grad[i].derivative(j).scale(0.5 * bbt[(i, j)]);
                }
            }
            let row: Vec<f64> = a.row(i).iter().copied().collect();
            let drift = Poly::linear(&row, f[i]);
            out = out + drift.mul(&grad[i]);
        }
        out
    }
}

/// `E[Y_{i_1}⋯Y_{i_k}]` for centred `Y ~ N(0, Q)`, `k ≤ 4`.
fn isserlis(idx: &[usize], q: &Mat) -> f64 {
    match idx {
        [] => 1.0,
        [a, b] => q[(*a, *b)],
        [a, b, c, d] => {
            q[(*a, *b)] * q[(*c, *d)] + q[(*a, *c)] * q[(*b, *d)] + q[(*a, *d)] * q[(*b, *c)]
        }
        _ if idx.len() % 2 == 1 => 0.0,
        _ => unreachable!("degree checked by caller"),
    }
}

impl std::ops::Add for Poly {
    type Output = Poly;
    fn add(mut self, rhs: Poly) -> Poly {
        for (e, c) in rhs.terms {
            self.add_term(e, c);
        }
        self
    }
}

impl std::ops::Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        self + rhs.scale(-1.0)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "*x{i}")?,
                    _ => write!(f, "*x{i}^{k}")?,
                }
            }
        }
        Ok(())
    }
}

/// Parses expressions such as `x^2 - 0.5*x0*x1 + 3` into a polynomial in `dim` variables.
///
/// `x` is an alias of `x0`; `^` takes a nonnegative integer exponent.
pub fn parse_poly(text: &str, dim: usize) -> Result<Poly> {
    let bad = |msg: &str| Error::InvalidArgument(format!("polynomial `{text}`: {msg}"));
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if cleaned.is_empty() {
        return Err(bad("empty"));
    }
    let mut out = Poly::zero(dim);
    // split into signed terms; a sign directly after `e`, `^` or `*` is part of the factor
    let mut terms: Vec<(f64, String)> = Vec::new();
    let mut sign = 1.0;
    let mut piece = String::new();
    let mut prev: Option<char> = None;
    for ch in cleaned.chars() {
        let binary = matches!(ch, '+' | '-')
            && !matches!(prev, None | Some('e' | 'E' | '^' | '*' | '+' | '-'));
        if binary {
            terms.push((sign, std::mem::take(&mut piece)));
            sign = if ch == '-' { -1.0 } else { 1.0 };
        } else if matches!(ch, '+' | '-') && piece.is_empty() {
            if ch == '-' {
                sign = -sign;
            }
        } else {
            piece.push(ch);
        }
        prev = Some(ch);
    }
    terms.push((sign, piece));
    for (sign, piece) in terms {
        if piece.is_empty() {
            return Err(bad("dangling operator"));
        }
        let mut coef = sign;
        let mut e = vec![0u8; dim];
        for factor in piece.split('*') {
            let (base, exp) = match factor.split_once('^') {
                Some((b, k)) => (b, k.parse::<u8>().map_err(|_| bad("bad exponent"))?),
                None => (factor, 1),
            };
            if let Some(rest) = base.strip_prefix('x') {
                let i = if rest.is_empty() {
                    0
                } else {
                    rest.parse::<usize>().map_err(|_| bad("bad variable"))?
                };
                if i >= dim {
                    return Err(bad(&format!("variable x{i} out of range for dimension {dim}")));
                }
                e[i] += exp;
            } else {
                let v: f64 = base.parse().map_err(|_| bad(&format!("bad factor `{base}`")))?;
                coef *= v.powi(exp as i32);
            }
        }
        out.add_term(e, coef);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianMeasure;
    use proptest::prelude::*;

    #[test]
    fn parse_and_eval() {
        let p = parse_poly("x^2 - 0.5*x0*x1 + 3", 2).unwrap();
        assert_eq!(p.eval(&[2.0, 1.0]), 4.0 - 1.0 + 3.0);
        assert_eq!(p.degree(), 2);
        let q = parse_poly("-x^4+2e-1*x", 1).unwrap();
        assert!((q.eval(&[2.0]) - (-16.0 + 0.4)).abs() < 1e-15);
        assert!(parse_poly("x2", 2).is_err());
    }

    #[test]
    fn scalar_second_moment_propagation() {
        let p = parse_poly("x^2", 1).unwrap();
        let e2 = (-2.0f64).exp();
        let u = Mat::from_element(1, 1, (-1.0f64).exp());
        let q = Mat::from_element(1, 1, 1.0 - e2);
        let r = p.gaussian_average(&u, &Vector::zeros(1), &q).unwrap();
        assert!((r.eval(&[0.0]) - (1.0 - e2)).abs() < 1e-15);
        assert!((r.eval(&[1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn isserlis_matches_quadrature() {
        let q = Mat::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.8]);
        let m = Vector::from_vec(vec![0.3, -0.7]);
        let g = GaussianMeasure::new(m.clone(), q.clone()).unwrap();
        let p = parse_poly("x0^4 - 2*x0^2*x1 + x0*x1^3 + x1^2 - 5", 2).unwrap();
        let exact = p.expectation(&m, &q).unwrap();
        let quad = g.expectation_real(|y| p.eval(y.as_slice()), 5).unwrap();
        assert!((exact - quad).abs() < 1e-12 * exact.abs().max(1.0));
    }

    #[test]
    fn rejects_high_degree() {
        let p = parse_poly("x^5", 1).unwrap();
        assert!(matches!(
            p.gaussian_average(&Mat::identity(1, 1), &Vector::zeros(1), &Mat::identity(1, 1)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn generator_on_quadratic() {
        // ℒx² = b² + 2x(ax + c)
        let p = parse_poly("x^2", 1).unwrap();
        let l = p.apply_generator(
            &Mat::from_element(1, 1, -1.0),
            &Mat::from_element(1, 1, 2.0),
            &Vector::from_element(1, 0.5),
        );
        let want = parse_poly("2 - 2*x^2 + x", 1).unwrap();
        assert_eq!(l, want);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn affine_substitution_commutes_with_eval(
            c in proptest::collection::vec(-2.0f64..2.0, 6),
            x in proptest::collection::vec(-1.5f64..1.5, 2),
        ) {
            let p = parse_poly("x0^3 + x0*x1 - x1^2 + 1", 2).unwrap();
            let m = Mat::from_row_slice(2, 2, &c[..4]);
            let shift = Vector::from_column_slice(&c[4..]);
            let xs = Vector::from_column_slice(&x);
            let y = &m * &xs + &shift;
            let direct = p.eval(y.as_slice());
            let sub = p.substitute_affine(&m, &shift).eval(&x);
            prop_assert!((direct - sub).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }
}
