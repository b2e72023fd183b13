//! Slow, direct reference implementations used to cross-check the models.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("design has {rows} rows but {targets} targets")]
    DimensionMismatch { rows: usize, targets: usize },
}

/// Least squares via the normal equations `XᵀX β = Xᵀy`, solved by Cholesky.
/// `x` is row-major with `ncols` columns.
pub fn ols_oracle(x: &[f64], ncols: usize, y: &[f64]) -> Result<Vec<f64>, OracleError> {
    let rows = x.len() / ncols;
    if rows != y.len() {
        return Err(OracleError::DimensionMismatch { rows, targets: y.len() });
    }
    let xm = DMatrix::from_row_slice(rows, ncols, x);
    let gram = xm.transpose() * &xm;
    let rhs = xm.transpose() * DVector::from_column_slice(y);
    let max_diag = (0..ncols).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let chol = gram.cholesky().ok_or(OracleError::RankDeficient)?;
    let l = chol.l_dirty();
    let min_pivot = (0..ncols).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * max_diag) {
        return Err(OracleError::RankDeficient);
    }
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Anisotropic Gaussian kernel regression evaluated term by term with no
/// stabilization. `bank[t]` is the feature vector of column `t`.
pub fn kernel_oracle(query: &[f64], bank: &[Vec<f64>], y: &[f64], sigma: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..bank.len() {
        let mut e = 0.0;
        for i in 0..query.len() {
            let d = query[i] - bank[t][i];
            e += d * d / (2.0 * sigma[i] * sigma[i]);
        }
        let k = (-e).exp();
        num += y[t] * k;
        den += k;
    }
    num / den
}

/// Isotropic Gaussian kernel regression with one bandwidth, term by term.
pub fn grnn_oracle(query: &[f64], bank: &[Vec<f64>], y: &[f64], sigma: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..bank.len() {
        let mut sq = 0.0;
        for i in 0..query.len() {
            sq += (query[i] - bank[t][i]).powi(2);
        }
        let k = (-sq / (2.0 * sigma * sigma)).exp();
        num += y[t] * k;
        den += k;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design() {
        let x = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let b = ols_oracle(&x, 3, &[4.0, -2.0, 7.5]).unwrap();
        for (a, e) in b.iter().zip([4.0, -2.0, 7.5]) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn two_feature_system() {
        // rows (1, 1), (1, 2), (1, 3) with y = 1, 2, 2:
        // XᵀX = [[3, 6], [6, 14]], Xᵀy = [5, 11] → β = (2/3, 1/2)
        let x = [1.0, 1.0, 1.0, 2.0, 1.0, 3.0];
        let b = ols_oracle(&x, 2, &[1.0, 2.0, 2.0]).unwrap();
        assert!((b[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((b[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column() {
        let x = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        assert_eq!(ols_oracle(&x, 2, &[1.0, 2.0, 3.0]), Err(OracleError::RankDeficient));
    }

    #[test]
    fn kernel_single_column() {
        assert_eq!(kernel_oracle(&[3.0, 1.0], &[vec![0.0, 0.0]], &[42.0], &[1.0, 2.0]), 42.0);
    }

    #[test]
    fn tied_kernel_is_grnn() {
        let bank = vec![vec![0.0, 1.0], vec![1.0, 0.5], vec![-0.3, 0.2]];
        let y = [1.0, 2.0, 4.0];
        let a = kernel_oracle(&[0.2, 0.4], &bank, &y, &[0.7, 0.7]);
        let b = grnn_oracle(&[0.2, 0.4], &bank, &y, 0.7);
        assert!((a - b).abs() < 1e-12);
    }
}
