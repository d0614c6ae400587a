//! Dense linear-algebra helpers shared by the regression code.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative threshold on `|R_kk|` below which a column counts as collinear.
const RANK_TOL: f64 = 1e-10;

pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, k| x[(i, cols[k])])
}

pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

pub fn select_entries(y: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |i, _| y[rows[i]])
}

pub fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    (0..x.ncols()).map(|j| x[(i, j)]).collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Prepends a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// Least-squares factorisation of a full-column-rank design `Z`.
///
/// `pinv` is `(Z'Z)^{-1} Z'`, whose rows are the OLS contrasts, and
/// `gram_inv` is `(Z'Z)^{-1}`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: DVector<f64>,
    pub gram_inv: DMatrix<f64>,
    pub pinv: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
}

/// Solves `min ||y - Z b||` through a Householder QR of `Z`.
///
/// Fails with [`Error::RankDeficient`] naming the columns of `Z` whose
/// diagonal entry in `R` vanishes relative to the column scale.
pub fn least_squares(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares> {
    let (n, k) = z.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if k == 0 {
        return Ok(LeastSquares {
            coef: DVector::zeros(0),
            gram_inv: DMatrix::zeros(0, 0),
            pinv: DMatrix::zeros(0, n),
            residuals: y.clone(),
            rss: y.norm_squared(),
        });
    }
    if n < k {
        return Err(Error::RankDeficient { columns: (n..k).collect() });
    }
    let qr = z.clone().qr();
    let r = qr.r();
    let q = qr.q();
    let collinear: Vec<usize> = (0..k)
        .filter(|&j| {
            let scale = z.column(j).norm().max(f64::MIN_POSITIVE);
            r[(j, j)].abs() <= RANK_TOL * scale
        })
        .collect();
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("triangular factor not invertible".into()))?;
    let pinv = &r_inv * q.transpose();
    let coef = &pinv * y;
    let gram_inv = &r_inv * r_inv.transpose();
    let residuals = y - z * &coef;
    let rss = residuals.norm_squared();
    Ok(LeastSquares { coef, gram_inv, pinv, residuals, rss })
}

/// Column means and population standard deviations of `x`; zero-variance
/// columns get scale 1.
pub fn column_moments(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut scales = Vec::with_capacity(x.ncols());
    let mut constant = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let m = col.sum() / n;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let sd = var.sqrt();
        let flat = !(sd > 1e-12 * m.abs().max(1.0));
        means.push(m);
        scales.push(if flat { 1.0 } else { sd });
        constant.push(flat);
    }
    (means, scales, constant)
}

/// Centers and scales columns to mean 0 and population sd 1.
pub fn standardize_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (means, scales, _) = column_moments(x);
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - means[j]) / scales[j])
}

pub fn center(y: &DVector<f64>) -> DVector<f64> {
    let m = y.mean();
    y.map(|v| v - m)
}

/// Orthogonal projector onto the column span of `x` (assumed full rank).
pub fn projector(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if x.ncols() == 0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let ls = least_squares(x, &DVector::zeros(n))?;
    Ok(x * ls.pinv)
}

/// Coefficient of determination of `pred` against `y`.
pub fn r_squared(y: &[f64], pred: &[f64]) -> f64 {
    let m = mean(y);
    let sst: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    let sse: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    if sst == 0.0 {
        return if sse == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - sse / sst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_exact_line() {
        let z = with_intercept(&DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]));
        let y = DVector::from_vec(vec![3.0, 5.0, 7.0]);
        let ls = least_squares(&z, &y).unwrap();
        assert!((ls.coef[0] - 1.0).abs() < 1e-12);
        assert!((ls.coef[1] - 2.0).abs() < 1e-12);
        assert!(ls.rss < 1e-20);
    }

    #[test]
    fn collinear_column_is_named() {
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 2.0, 2.0, //
            2.0, 1.0, 4.0, //
            3.0, 5.0, 6.0, //
            4.0, 3.0, 8.0,
        ]);
        match least_squares(&x, &DVector::zeros(4)) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec![2]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn projector_is_idempotent() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 2.0, -1.0, 0.0, 3.0, 1.5, 1.0]);
        let p = projector(&x).unwrap();
        let diff = &p * &p - &p;
        assert!(diff.amax() < 1e-12);
    }
}
