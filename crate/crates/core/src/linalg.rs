//! Small dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative eigenvalue floor below which a covariance direction counts as degenerate.
pub const PSD_TOL: f64 = 1e-12;

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone().singular_values().max()
}

/// Smallest singular value.
pub fn min_singular_value(m: &Mat) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone().singular_values().min()
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues and eigenvectors of the symmetric part of `m`.
pub fn sym_eigen(m: &Mat) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    sym_eigen(m).eigenvalues.max()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    sym_eigen(m).eigenvalues.min()
}

/// Symmetrizes `q` and clamps slightly negative eigenvalues to zero.
///
/// Eigenvalues below `-PSD_TOL * ‖q‖` are reported as an error.
pub fn psd_repair(q: &Mat) -> Result<Mat> {
    let sym = symmetrize(q);
    let n = sym.nrows();
    if n == 0 {
        return Ok(sym);
    }
    let eig = SymmetricEigen::new(sym.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(sym);
    }
    if min < -PSD_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd { min_eig: min });
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    Ok(&eig.eigenvectors * Mat::from_diagonal(&clamped) * eig.eigenvectors.transpose())
}

/// Symmetric square root `Q^{1/2}` of a positive semidefinite matrix.
pub fn sym_sqrt(q: &Mat) -> Result<Mat> {
    let eig = sym_eigen(q);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if eig.eigenvalues.min() < -PSD_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd {
            min_eig: eig.eigenvalues.min(),
        });
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Mat::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Symmetric inverse square root `Q^{-1/2}`; fails when `Q` is numerically singular.
pub fn sym_inv_sqrt(q: &Mat) -> Result<Mat> {
    let eig = sym_eigen(q);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.min();
    if min <= 1e-13 * scale || min <= 0.0 {
        return Err(Error::Singular { min_eig: min });
    }
    let roots = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    Ok(&eig.eigenvectors * Mat::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Pivoted Cholesky factorization `Q = L Lᵀ` of a positive semidefinite matrix.
///
/// Returns the factor (columns past the detected rank are zero) and the rank.
pub fn pivoted_cholesky(q: &Mat) -> (Mat, usize) {
    let n = q.nrows();
    let mut a = symmetrize(q);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut l = Mat::zeros(n, n);
    let scale = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    let tol = PSD_TOL * scale.max(f64::MIN_POSITIVE) * n as f64;
    let mut rank = 0;
    for k in 0..n {
        // pivot on the largest remaining diagonal entry
        let (piv, dmax) = (k..n)
            .map(|i| (i, a[(perm[i], perm[i])]))
            .fold((k, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
        if dmax <= tol {
            break;
        }
        perm.swap(k, piv);
        let pk = perm[k];
        let lkk = dmax.sqrt();
        l[(pk, k)] = lkk;
        for &pi in &perm[k + 1..] {
            l[(pi, k)] = a[(pi, pk)] / lkk;
        }
        for i in k + 1..n {
            let pi = perm[i];
            for j in k + 1..=i {
                let pj = perm[j];
                let v = a[(pi, pj)] - l[(pi, k)] * l[(pj, k)];
                a[(pi, pj)] = v;
                a[(pj, pi)] = v;
            }
        }
        rank += 1;
    }
    (l, rank)
}

/// Least-squares line `y ≈ intercept + slope·x`; returns (slope, intercept, r²).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pivoted_cholesky_reconstructs_semidefinite() {
        let v = Vector::from_vec(vec![1.0, 2.0, -1.0]);
        let w = Vector::from_vec(vec![0.0, 1.0, 1.0]);
        let q = &v * v.transpose() + &w * w.transpose();
        let (l, rank) = pivoted_cholesky(&q);
        assert_eq!(rank, 2);
        assert!((&l * l.transpose() - &q).norm() < 1e-12);
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let q = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = sym_sqrt(&q).unwrap();
        assert!((&r * &r - &q).norm() < 1e-13);
        let ri = sym_inv_sqrt(&q).unwrap();
        assert!((&ri * &q * &ri - Mat::identity(2, 2)).norm() < 1e-13);
    }

    #[test]
    fn psd_repair_rejects_indefinite() {
        let q = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(psd_repair(&q), Err(Error::NotPsd { .. })));
        let q = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-14]);
        let r = psd_repair(&q).unwrap();
        assert!(r[(1, 1)] >= 0.0);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (m, b, r2) = linear_fit(&xs, &ys);
        assert!((m + 0.5).abs() < 1e-14 && (b - 2.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
