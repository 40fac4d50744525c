//! Least-squares coefficients from the normal equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;

/// Least-squares coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LsCoefficients(pub DVector<f64>);

impl LsCoefficients {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Solve `gram * b = xty` with a column-pivoted QR factorization; a
/// numerically rank-deficient Gram matrix is an error.
pub fn least_squares_gram(gram: &DMatrix<f64>, xty: &DVector<f64>) -> Result<LsCoefficients> {
    let m = xty.len();
    if gram.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "Gram is {}x{}, right-hand side has length {m}",
            gram.nrows(),
            gram.ncols()
        )));
    }
    let qr = gram.clone().col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    for i in 0..m {
        if r[(i, i)].abs() <= RANK_TOL * lead.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular(format!(
                "Gram matrix has numerical rank {i} < {m}"
            )));
        }
    }
    let b = qr
        .solve(xty)
        .ok_or_else(|| Error::Singular("normal equations have no unique solution".into()))?;
    Ok(LsCoefficients(b))
}

/// Regress `y` on the columns of `x`.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LsCoefficients> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, response has length {}",
            x.nrows(),
            y.len()
        )));
    }
    least_squares_gram(&x.tr_mul(x), &x.tr_mul(y))
}
