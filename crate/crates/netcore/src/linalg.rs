//! Dense Cholesky factorization and the log-determinant helpers built on it.

use crate::error::{NetError, Result};
use crate::Mat;
use ndarray::Array2;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
///
/// Only the lower triangle of `a` is read. Fails with the ratio of the largest
/// diagonal entry to the failing pivot when `a` is not numerically positive definite.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(NetError::InvalidInput(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(NetError::InvalidInput("cholesky input contains non-finite entries".into()));
    }
    let max_diag = (0..n).map(|i| a[[i, i]].abs()).fold(0.0f64, f64::max);
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            let condition = if d > 0.0 { max_diag / d } else { f64::INFINITY };
            return Err(NetError::NotPositiveDefinite { condition });
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Natural-log determinant of a symmetric positive-definite matrix.
pub fn logdet_spd(a: &Mat) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(logdet_from_factor(&l))
}

pub(crate) fn logdet_from_factor(l: &Mat) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>()
}

/// Inverse of `A = L Lᵀ` given its Cholesky factor.
pub fn inverse_from_factor(l: &Mat) -> Mat {
    let n = l.nrows();
    // Solve L X = I by forward substitution, then Lᵀ Y = X by back substitution.
    let mut x = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        for i in 0..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[[i, k]] * x[[k, c]];
            }
            x[[i, c]] = s / l[[i, i]];
        }
    }
    let mut y = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        for i in (0..n).rev() {
            let mut s = x[[i, c]];
            for k in (i + 1)..n {
                s -= l[[k, i]] * y[[k, c]];
            }
            y[[i, c]] = s / l[[i, i]];
        }
    }
    // Symmetrize to remove round-off asymmetry.
    let yt = y.t().to_owned();
    (y + yt) * 0.5
}
