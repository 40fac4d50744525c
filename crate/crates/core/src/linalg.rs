//! Dense linear-algebra helpers shared by the design, tamper and theory code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky factorization that reports the smallest eigenvalue on failure.
pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        min_eigenvalue: min_eigenvalue(m),
    })
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = cholesky(m)?.inverse();
    Ok(symmetrize(inv))
}

/// Average a nearly symmetric matrix with its transpose.
pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// True when `m + tol * I` admits a Cholesky factorization, i.e. the smallest
/// eigenvalue of `m` exceeds `-tol` (up to rounding).
pub fn is_psd_within(m: &DMatrix<f64>, tol: f64) -> bool {
    let mut shifted = m.clone();
    for i in 0..m.nrows() {
        shifted[(i, i)] += tol;
    }
    Cholesky::new(shifted).is_some()
}

/// Matrix of i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Fill column by column so the draw order is independent of storage tricks.
    let mut out = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = rng.sample(StandardNormal);
        }
    }
    out
}

/// Vector of i.i.d. standard normal entries.
pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal basis for the column span of a full-column-rank matrix.
pub fn orthonormal_columns(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cols = a.ncols();
    if a.nrows() < cols {
        return Err(Error::Dimension(format!(
            "cannot orthonormalize {cols} columns in dimension {}",
            a.nrows()
        )));
    }
    let qr = a.qr();
    let r = qr.r();
    let scale = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..cols).any(|i| r[(i, i)].abs() <= 1e-12 * scale.max(1e-300)) {
        return Err(Error::Singular("matrix is column rank deficient".into()));
    }
    Ok(qr.q())
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Residual of projecting `v` off the column span of the orthonormal `q`.
pub fn project_out(q: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let coef = q.tr_mul(v);
    v - q * coef
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn min_eigenvalue_of_two_by_two_block() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.7, 1.0]);
        assert!((min_eigenvalue(&m) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn psd_check_respects_tolerance() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(is_psd_within(&m, 1e-10));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.1, 1.1, 1.0]);
        assert!(!is_psd_within(&bad, 1e-10));
    }

    #[test]
    fn orthonormal_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = orthonormal_columns(gaussian_matrix(&mut rng, 9, 4)).unwrap();
        let eye = DMatrix::<f64>::identity(4, 4);
        assert!(max_abs_diff(&q.tr_mul(&q), &eye) < 1e-12);
    }

    #[test]
    fn cholesky_failure_reports_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky(&m) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
