//! Tampered designs: fixed-design knockoff copies and Gaussian-mirror
//! augmentations (randomized and de-randomized).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, gaussian_matrix, gaussian_vector, max_abs_diff, project_out};
use crate::seeds::{child_stream, stream};

/// Tolerance for diag(s) <= 2G.
const PSD_TOL: f64 = 1e-10;
/// Eigenvalues of C'C in [-CLIP, 0) are treated as zero.
const CLIP: f64 = 1e-12;
const ALPHA_TOL: f64 = 1e-10;
const GRAM_TOL: f64 = 1e-8;

/// How the knockoff correlation gap s is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnockoffFlavor {
    /// s_j = min(1, 2 lambda_min(G)).
    Equicorrelated,
    /// s_j = alpha / (G^-1)_jj with the largest feasible alpha in [0, 1].
    ConditionalIndependence,
    /// Caller-supplied s.
    Custom,
}

impl KnockoffFlavor {
    pub fn label(&self) -> &'static str {
        match self {
            KnockoffFlavor::Equicorrelated => "ec",
            KnockoffFlavor::ConditionalIndependence => "ci",
            KnockoffFlavor::Custom => "custom",
        }
    }
}

/// Diagonal of diag(s) with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SVector {
    pub s: Vec<f64>,
    pub flavor: KnockoffFlavor,
    /// Truncation factor of the conditional-independence rule (1 otherwise).
    pub alpha: f64,
}

fn two_g_minus_s(gram: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut m = gram * 2.0;
    for (i, v) in s.iter().enumerate() {
        m[(i, i)] -= v;
    }
    m
}

/// Compute s for the equicorrelated or conditional-independence rule.
pub fn knockoff_s(gram: &DMatrix<f64>, flavor: KnockoffFlavor) -> Result<SVector> {
    let p = gram.nrows();
    match flavor {
        KnockoffFlavor::Equicorrelated => {
            let lam = linalg::min_eigenvalue(gram);
            if lam <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    min_eigenvalue: lam,
                });
            }
            Ok(SVector {
                s: vec![(2.0 * lam).min(1.0); p],
                flavor,
                alpha: 1.0,
            })
        }
        KnockoffFlavor::ConditionalIndependence => {
            let inv = linalg::spd_inverse(gram)?;
            let base: Vec<f64> = (0..p).map(|j| 1.0 / inv[(j, j)]).collect();
            let feasible = |alpha: f64| {
                let scaled: Vec<f64> = base.iter().map(|b| alpha * b).collect();
                linalg::is_psd_within(&two_g_minus_s(gram, &scaled), 0.0)
            };
            // The lower end of the bracket is always strictly feasible, which
            // keeps the knockoff factorization away from indefiniteness.
            let alpha = if feasible(1.0) {
                1.0
            } else {
                let (mut lo, mut hi) = (0.0, 1.0);
                while hi - lo > ALPHA_TOL {
                    let mid = 0.5 * (lo + hi);
                    if feasible(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            Ok(SVector {
                s: base.iter().map(|b| alpha * b).collect(),
                flavor,
                alpha,
            })
        }
        KnockoffFlavor::Custom => Err(invalid("flavor", "use custom_s to supply s explicitly")),
    }
}

/// Validate a caller-supplied s against 0 <= s and diag(s) <= 2G.
pub fn custom_s(gram: &DMatrix<f64>, s: Vec<f64>) -> Result<SVector> {
    if s.len() != gram.nrows() {
        return Err(Error::Dimension(format!(
            "s has length {}, Gram is {}x{}",
            s.len(),
            gram.nrows(),
            gram.ncols()
        )));
    }
    if s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid("s", "entries must be finite and nonnegative"));
    }
    if !linalg::is_psd_within(&two_g_minus_s(gram, &s), PSD_TOL) {
        return Err(invalid("s", "diag(s) is not dominated by 2G"));
    }
    Ok(SVector {
        s,
        flavor: KnockoffFlavor::Custom,
        alpha: 1.0,
    })
}

/// A design with its knockoff copy.
#[derive(Debug, Clone)]
pub struct KnockoffBundle {
    x: DesignMatrix,
    xtilde: DMatrix<f64>,
    s: SVector,
}

impl KnockoffBundle {
    pub fn x(&self) -> &DesignMatrix {
        &self.x
    }

    pub fn xtilde(&self) -> &DMatrix<f64> {
        &self.xtilde
    }

    pub fn s(&self) -> &SVector {
        &self.s
    }

    /// Gram matrix of [X, X~] implied by G and s.
    pub fn augmented_gram(&self) -> DMatrix<f64> {
        augmented_gram(self.x.gram().matrix(), &self.s.s)
    }

    /// (max |X~'X~ - G|, max |X'X~ - (G - diag s)|).
    pub fn gram_errors(&self) -> (f64, f64) {
        gram_errors(self.x.x(), &self.xtilde, self.x.gram().matrix(), &self.s.s)
    }
}

/// [[G, G - diag s], [G - diag s, G]].
pub fn augmented_gram(gram: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let p = gram.nrows();
    let mut cross = gram.clone();
    for (j, v) in s.iter().enumerate() {
        cross[(j, j)] -= v;
    }
    let mut out = DMatrix::zeros(2 * p, 2 * p);
    out.view_mut((0, 0), (p, p)).copy_from(gram);
    out.view_mut((p, p), (p, p)).copy_from(gram);
    out.view_mut((0, p), (p, p)).copy_from(&cross);
    out.view_mut((p, 0), (p, p)).copy_from(&cross.transpose());
    out
}

fn gram_errors(x: &DMatrix<f64>, xt: &DMatrix<f64>, gram: &DMatrix<f64>, s: &[f64]) -> (f64, f64) {
    let mut cross = gram.clone();
    for (j, v) in s.iter().enumerate() {
        cross[(j, j)] -= v;
    }
    (
        max_abs_diff(&xt.tr_mul(xt), gram),
        max_abs_diff(&x.tr_mul(xt), &cross),
    )
}

/// X~ = X (I - G^-1 diag s) + U C with U orthonormal and orthogonal to the
/// columns of X, and C'C = 2 diag s - diag s G^-1 diag s.
pub fn build_knockoffs(x: &DesignMatrix, s: &SVector, seed: u64) -> Result<KnockoffBundle> {
    let (n, p) = (x.n(), x.p());
    if n < 2 * p {
        return Err(invalid(
            "n",
            format!("knockoffs need n >= 2p = {}, got {n}", 2 * p),
        ));
    }
    if s.s.len() != p {
        return Err(Error::Dimension(format!(
            "s has length {}, design has {p} columns",
            s.s.len()
        )));
    }
    let gram = x.gram().matrix();
    let ginv = linalg::spd_inverse(gram)?;

    // I - G^-1 diag s
    let mut shrink = -ginv.clone();
    for j in 0..p {
        shrink.column_mut(j).scale_mut(s.s[j]);
        shrink[(j, j)] += 1.0;
    }
    let mut target = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            target[(i, j)] = -s.s[i] * ginv[(i, j)] * s.s[j];
        }
        target[(i, i)] += 2.0 * s.s[i];
    }
    let eig = SymmetricEigen::new(linalg::symmetrize(target));
    let mut root = eig.eigenvectors.transpose();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -CLIP {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: lam,
            });
        }
        root.row_mut(k).scale_mut(lam.max(0.0).sqrt());
    }

    let mut rng = stream(seed);
    let basis = linalg::orthonormal_columns(x.x().clone())?;
    let mut noise = gaussian_matrix(&mut rng, n, p);
    // Project twice to keep the complement orthogonal to working precision.
    for _ in 0..2 {
        let coef = basis.tr_mul(&noise);
        noise -= &basis * coef;
    }
    let u = linalg::orthonormal_columns(noise)?;
    let xtilde = x.x() * shrink + u * root;

    let (e1, e2) = gram_errors(x.x(), &xtilde, gram, &s.s);
    if e1 >= GRAM_TOL || e2 >= GRAM_TOL {
        return Err(Error::Invariant(format!(
            "knockoff Gram identities off by {e1:.3e} and {e2:.3e}"
        )));
    }
    Ok(KnockoffBundle {
        x: x.clone(),
        xtilde,
        s: s.clone(),
    })
}

/// The pair of mirror columns x_j +/- c_j z_j for one variable.
#[derive(Debug, Clone)]
pub struct GmAugmentation {
    pub j: usize,
    pub x_plus: DVector<f64>,
    pub x_minus: DVector<f64>,
    pub c: f64,
    /// Random direction; `None` for the de-randomized variant.
    pub z: Option<DVector<f64>>,
}

/// Random direction used for variable `j` under `seed`.
pub fn gm_direction(n: usize, seed: u64, j: usize) -> DVector<f64> {
    gaussian_vector(&mut child_stream(seed, &[j as u64]), n)
}

fn without_column(x: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    x.clone().remove_column(j)
}

fn residual_basis(x: &DesignMatrix, j: usize) -> Result<DMatrix<f64>> {
    if j >= x.p() {
        return Err(invalid(
            "j",
            format!("index {j} out of range for {} columns", x.p()),
        ));
    }
    linalg::orthonormal_columns(without_column(x.x(), j))
        .map_err(|_| Error::Singular(format!("the design without column {j} is rank deficient")))
}

/// Randomized Gaussian-mirror columns for variable `j`.
pub fn gm_augment(x: &DesignMatrix, j: usize, seed: u64) -> Result<GmAugmentation> {
    if x.n() < x.p() + 1 {
        return Err(invalid(
            "n",
            format!("need n >= p + 1 = {}, got {}", x.p() + 1, x.n()),
        ));
    }
    let basis = residual_basis(x, j)?;
    let xj = x.x().column(j).into_owned();
    let z = gm_direction(x.n(), seed, j);
    let rx = project_out(&basis, &xj).norm();
    let rz = project_out(&basis, &z).norm();
    if rz == 0.0 {
        return Err(Error::Singular(
            "random direction lies in the column span".into(),
        ));
    }
    let c = rx / rz;
    Ok(GmAugmentation {
        j,
        x_plus: &xj + &z * c,
        x_minus: &xj - &z * c,
        c,
        z: Some(z),
    })
}

/// De-randomized mirror columns x_j +/- x~_j.
pub fn degm_augment(x: &DesignMatrix, xtilde: &DMatrix<f64>, j: usize) -> Result<GmAugmentation> {
    if xtilde.shape() != x.x().shape() {
        return Err(Error::Dimension(
            "knockoff matrix shape differs from the design".into(),
        ));
    }
    let basis = residual_basis(x, j)?;
    let xj = x.x().column(j).into_owned();
    let tj = xtilde.column(j).into_owned();
    let rx = project_out(&basis, &xj).norm();
    let rt = project_out(&basis, &tj).norm();
    if (rx - rt).abs() > 1e-6 {
        return Err(invalid(
            "xtilde",
            format!("residual norms differ for column {j}: {rx} vs {rt}"),
        ));
    }
    Ok(GmAugmentation {
        j,
        x_plus: &xj + &tj,
        x_minus: &xj - &tj,
        c: 1.0,
        z: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{DesignKind, DesignSpec};

    fn design(kind: DesignKind, p: usize) -> DesignMatrix {
        DesignSpec::new(kind, p, 3 * p, 21).build().unwrap()
    }

    #[test]
    fn s_examples() {
        let g = design(DesignKind::Block2 { rho: 0.7 }, 6);
        let ec = knockoff_s(g.gram().matrix(), KnockoffFlavor::Equicorrelated).unwrap();
        assert!(ec.s.iter().all(|v| (v - 0.6).abs() < 1e-10));
        let g = design(DesignKind::Block2 { rho: 0.5 }, 6);
        let ci = knockoff_s(g.gram().matrix(), KnockoffFlavor::ConditionalIndependence).unwrap();
        assert_eq!(ci.alpha, 1.0);
        assert!(ci.s.iter().all(|v| (v - 0.75).abs() < 1e-12));
        let eye = design(DesignKind::Orthogonal, 5);
        for flavor in [
            KnockoffFlavor::Equicorrelated,
            KnockoffFlavor::ConditionalIndependence,
        ] {
            let s = knockoff_s(eye.gram().matrix(), flavor).unwrap();
            assert!(s.s.iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn custom_s_validation() {
        let g = design(DesignKind::Block2 { rho: 0.5 }, 4);
        assert!(custom_s(g.gram().matrix(), vec![1.0; 4]).is_ok());
        assert!(custom_s(g.gram().matrix(), vec![1.5; 4]).is_err());
        assert!(custom_s(g.gram().matrix(), vec![-0.1; 4]).is_err());
    }

    #[test]
    fn block2_ec_cross_products() {
        let d = design(DesignKind::Block2 { rho: 0.7 }, 6);
        let s = knockoff_s(d.gram().matrix(), KnockoffFlavor::Equicorrelated).unwrap();
        let b = build_knockoffs(&d, &s, 3).unwrap();
        let cross = d.x().tr_mul(b.xtilde());
        assert!((cross[(0, 0)] - 0.4).abs() < 1e-8);
        assert!((cross[(0, 1)] - 0.7).abs() < 1e-8);
    }

    #[test]
    fn orthogonal_knockoffs_are_orthogonal() {
        let d = design(DesignKind::Orthogonal, 5);
        let s = knockoff_s(d.gram().matrix(), KnockoffFlavor::Equicorrelated).unwrap();
        let b = build_knockoffs(&d, &s, 3).unwrap();
        for j in 0..5 {
            assert!(d.x().column(j).dot(&b.xtilde().column(j)).abs() < 1e-10);
            assert!((b.xtilde().column(j).norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn knockoffs_need_enough_rows() {
        let d = DesignSpec::new(DesignKind::Orthogonal, 4, 6, 1)
            .build()
            .unwrap();
        let s = knockoff_s(d.gram().matrix(), KnockoffFlavor::Equicorrelated).unwrap();
        assert!(build_knockoffs(&d, &s, 0).is_err());
    }

    #[test]
    fn gm_scale_matches_residual_norms() {
        let d = design(DesignKind::Block2 { rho: 0.5 }, 6);
        let aug = gm_augment(&d, 2, 8).unwrap();
        let basis = residual_basis(&d, 2).unwrap();
        let rx = project_out(&basis, &d.x().column(2).into_owned()).norm();
        let rz = project_out(&basis, &(aug.z.clone().unwrap() * aug.c)).norm();
        assert!((rx - rz).abs() < 1e-10);
        assert!((rx * rx - 0.75).abs() < 1e-10);
        let sum = &aug.x_plus + &aug.x_minus;
        assert!((sum - d.x().column(2) * 2.0).amax() < 1e-14);
    }

    #[test]
    fn degm_ci_residual_is_orthogonal() {
        let d = design(DesignKind::Block2 { rho: 0.5 }, 6);
        let s = knockoff_s(d.gram().matrix(), KnockoffFlavor::ConditionalIndependence).unwrap();
        let b = build_knockoffs(&d, &s, 4).unwrap();
        let basis = residual_basis(&d, 1).unwrap();
        let rt = project_out(&basis, &b.xtilde().column(1).into_owned());
        assert!(d.x().column(1).dot(&rt).abs() < 1e-8);
        let aug = degm_augment(&d, b.xtilde(), 1).unwrap();
        assert!(aug.z.is_none());
    }
}
