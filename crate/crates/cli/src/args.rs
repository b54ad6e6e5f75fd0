//! Parsers for the compact command-line value formats.

use ou_core::gaussian::GaussianMeasure;
use ou_core::linalg::{Mat, Vector};
use ou_core::measures::BaseMeasure;
use ou_core::propagator::MultiIndex;
use ou_core::{Error, Result};

fn bad(what: &str, text: &str) -> Error {
    Error::InvalidArgument(format!("{what} `{text}`"))
}

fn numbers(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad("expected numbers in", text)))
        .collect()
}

pub fn parse_vector(text: &str, dim: usize) -> Result<Vector> {
    let v = numbers(text)?;
    if v.len() != dim {
        return Err(bad(&format!("expected {dim} components in"), text));
    }
    Ok(Vector::from_vec(v))
}

/// `lo:hi`.
pub fn parse_range(text: &str) -> Result<(f64, f64)> {
    let (lo, hi) = text.split_once(':').ok_or_else(|| bad("expected lo:hi, got", text))?;
    let lo = lo.trim().parse::<f64>().map_err(|_| bad("bad range", text))?;
    let hi = hi.trim().parse::<f64>().map_err(|_| bad("bad range", text))?;
    Ok((lo, hi))
}

/// `lo:hi:count`, endpoints included.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(bad("expected lo:hi:count, got", text));
    };
    let lo = lo.trim().parse::<f64>().map_err(|_| bad("bad grid", text))?;
    let hi = hi.trim().parse::<f64>().map_err(|_| bad("bad grid", text))?;
    let count = count.trim().parse::<usize>().map_err(|_| bad("bad grid", text))?;
    if count == 0 || hi < lo || (count == 1 && hi > lo) {
        return Err(bad("empty or reversed grid", text));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect())
}

/// `lo:hi:count` for one dimension, otherwise `;`-separated comma vectors.
pub fn parse_points(text: &str, dim: usize) -> Result<Vec<Vector>> {
    if text.matches(':').count() == 2 {
        if dim != 1 {
            return Err(bad("a lo:hi:count grid needs a scalar system, got", text));
        }
        return Ok(parse_grid(text)?.into_iter().map(|x| Vector::from_element(1, x)).collect());
    }
    text.split(';').filter(|s| !s.trim().is_empty()).map(|p| parse_vector(p, dim)).collect()
}

/// A single order (first axis) or one order per axis.
pub fn parse_multi_index(text: &str, dim: usize) -> Result<MultiIndex> {
    let orders: Vec<u8> = text
        .split(',')
        .map(|s| s.trim().parse::<u8>().map_err(|_| bad("bad derivative order", text)))
        .collect::<Result<_>>()?;
    match orders.len() {
        1 => Ok(MultiIndex::axis(dim, 0, orders[0])),
        n if n == dim => MultiIndex::new(orders),
        _ => Err(bad(&format!("expected 1 or {dim} orders in"), text)),
    }
}

pub enum FamilySpec {
    Canonical,
    Base(BaseMeasure),
}

/// `canonical`, `point:x0,..` or `gauss:m0,..,q`.
pub fn parse_family(text: &str, dim: usize) -> Result<FamilySpec> {
    if text.trim() == "canonical" {
        return Ok(FamilySpec::Canonical);
    }
    match text.split_once(':') {
        Some(("point", body)) => Ok(FamilySpec::Base(BaseMeasure::PointMass(parse_vector(body, dim)?))),
        Some(("gauss", body)) => {
            let v = numbers(body)?;
            if v.len() != dim + 1 {
                return Err(bad(&format!("expected {dim} mean components and a variance in"), text));
            }
            let mean = Vector::from_column_slice(&v[..dim]);
            let cov = Mat::identity(dim, dim) * v[dim];
            Ok(FamilySpec::Base(BaseMeasure::Gaussian(GaussianMeasure::new(mean, cov)?)))
        }
        _ => Err(bad("unknown family", text)),
    }
}
