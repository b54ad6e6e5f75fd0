//! Exponent fits of the derivative operator norms against the time gap.

use crate::error::{Error, Result};
use crate::linalg::linear_fit;
use crate::model::OuModel;
use crate::propagator::galerkin::MAX_RESOLVING_DEGREE;
use crate::propagator::{operator_norm_estimate, DegreeChoice, MultiIndex};

/// Degree floor used by the fits.
pub const FIT_MIN_DEGREE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapMode {
    /// `log‖D^αP‖` against `log(t−s)`.
    Small,
    /// `log‖D^αP‖` against `t−s`.
    Large,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `(gap, norm)` rows.
    pub rows: Vec<(f64, f64)>,
}

/// Gaps spread over `[lo, hi]`: geometric for small gaps, uniform for large ones.
pub fn gap_grid(range: (f64, f64), points: usize, mode: GapMode) -> Vec<f64> {
    let (lo, hi) = range;
    let m = (points - 1) as f64;
    (0..points)
        .map(|i| {
            let u = i as f64 / m;
            match mode {
                GapMode::Small => lo * (hi / lo).powf(u),
                GapMode::Large => lo + (hi - lo) * u,
            }
        })
        .collect()
}

/// Fits the growth of `‖D^α P_{s,s+gap}‖` with `s` at the start of the model window.
pub fn fit_smoothing_exponent(
    model: &OuModel,
    alpha: &MultiIndex,
    range: (f64, f64),
    points: usize,
    mode: GapMode,
) -> Result<ExponentFit> {
    let (lo, hi) = range;
    if points < 5 {
        return Err(Error::InvalidArgument(format!("{points} gaps, at least 5 needed")));
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidArgument(format!("gap range [{lo}, {hi}]")));
    }
    let (w1, w2) = model.window();
    if w1 + hi > w2 {
        return Err(Error::OutOfRange { t: w1 + hi, lo: w1, hi: w2 });
    }
    let degree = DegreeChoice::Resolving {
        min: FIT_MIN_DEGREE,
        max: MAX_RESOLVING_DEGREE,
    };
    let rows = gap_grid(range, points, mode)
        .into_iter()
        .map(|gap| Ok((gap, operator_norm_estimate(model, w1, w1 + gap, alpha, degree)?.value)))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows
        .iter()
        .map(|(g, _)| if mode == GapMode::Small { g.ln() } else { *g })
        .collect();
    let ys: Vec<f64> = rows.iter().map(|(_, v)| v.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(ExponentFit {
        slope,
        intercept,
        r2,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::autonomous_scalar;

    #[test]
    fn autonomous_exponents() {
        let model = OuModel::with_defaults(autonomous_scalar(), (0.0, 9.0)).unwrap();
        let small = fit_smoothing_exponent(&model, &MultiIndex(vec![1]), (1e-2, 1e-1), 5, GapMode::Small).unwrap();
        assert!((small.slope + 0.5).abs() < 0.05, "{small:?}");
        let large = fit_smoothing_exponent(&model, &MultiIndex(vec![1]), (1.0, 8.0), 8, GapMode::Large).unwrap();
        assert!((large.slope + 1.0).abs() < 1e-3, "{large:?}");
        assert!(fit_smoothing_exponent(&model, &MultiIndex(vec![1]), (1.0, 8.0), 4, GapMode::Large).is_err());
    }

    #[test]
    fn gap_grids() {
        let g = gap_grid((1e-3, 1e-1), 3, GapMode::Small);
        assert!((g[1] - 1e-2).abs() < 1e-15);
        assert_eq!(gap_grid((1.0, 8.0), 8, GapMode::Large)[7], 8.0);
    }
}
