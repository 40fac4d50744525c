//! Variances of the least-squares coefficients that govern Gaussian mirror,
//! knockoff-OLS and de-randomized Gaussian mirror.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::TheoryDesign;
use crate::error::{invalid, Error, Result};
use crate::linalg::spd_inverse;
use crate::tamper::KnockoffBundle;

/// Per-variable inverse-Gram entries.
///
/// `omega`: diagonal of G^{-1}. `omega1`, `omega2`: entries (j, j) and
/// (j, j + p) of the inverse of the 2p x 2p Gram of [X, X~]. `sigma1`,
/// `sigma2`: entries (j, j) and (j, j + 1) of the inverse of the Gram of X
/// with x~_j inserted after x_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    pub omega: Vec<f64>,
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl VarianceProfile {
    /// Largest violation of omega_j <= sigma1_j <= omega1_j, relative to omega1_j.
    pub fn ordering_violation(&self) -> f64 {
        (0..self.omega.len())
            .map(|j| {
                let scale = self.omega1[j].abs().max(1.0);
                ((self.omega[j] - self.sigma1[j]) / scale)
                    .max((self.sigma1[j] - self.omega1[j]) / scale)
                    .max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

/// Profile of a design with Gram `gram` and knockoff vector `s`.
pub fn variance_profile(gram: &DMatrix<f64>, s: &[f64]) -> Result<VarianceProfile> {
    let p = gram.nrows();
    if gram.ncols() != p || s.len() != p {
        return Err(Error::Dimension(format!(
            "gram is {}x{}, s has length {}",
            gram.nrows(),
            gram.ncols(),
            s.len()
        )));
    }
    let cross = gram - DMatrix::from_diagonal(&DVector::from_column_slice(s));
    profile_from_grams(gram, &cross, gram)
}

/// Profile computed from the realized matrices of a knockoff bundle.
pub fn variance_profile_from_bundle(bundle: &KnockoffBundle) -> Result<VarianceProfile> {
    let x = bundle.x().x();
    let xt = bundle.xtilde();
    let gram = x.transpose() * x;
    let cross = x.transpose() * xt;
    let tilde = xt.transpose() * xt;
    profile_from_grams(&gram, &cross, &tilde)
}

/// `gram` = X'X, `cross` = X'X~, `tilde` = X~'X~.
fn profile_from_grams(
    gram: &DMatrix<f64>,
    cross: &DMatrix<f64>,
    tilde: &DMatrix<f64>,
) -> Result<VarianceProfile> {
    let p = gram.nrows();
    let ginv = spd_inverse(gram)?;
    let omega: Vec<f64> = (0..p).map(|j| ginv[(j, j)]).collect();

    let mut star = DMatrix::zeros(2 * p, 2 * p);
    star.view_mut((0, 0), (p, p)).copy_from(gram);
    star.view_mut((0, p), (p, p)).copy_from(cross);
    star.view_mut((p, 0), (p, p)).copy_from(&cross.transpose());
    star.view_mut((p, p), (p, p)).copy_from(tilde);
    let star_inv = spd_inverse(&star)?;
    let omega1: Vec<f64> = (0..p).map(|j| star_inv[(j, j)]).collect();
    let omega2: Vec<f64> = (0..p).map(|j| star_inv[(j, j + p)]).collect();

    let mut sigma1 = Vec::with_capacity(p);
    let mut sigma2 = Vec::with_capacity(p);
    for j in 0..p {
        // Residual Gram of (x_j, x~_j) after projecting out X_{-j}, using
        // x'P_{-j}y = v'G^{-1}w - (G^{-1}v)_j (G^{-1}w)_j / omega_j with
        // v = X'x and w = X'y.
        let v = gram.column(j).into_owned();
        let w = cross.column(j).into_owned();
        let gv = &ginv * &v;
        let gw = &ginv * &w;
        let project = |a: &DVector<f64>, ga: &DVector<f64>, gb: &DVector<f64>| {
            a.dot(gb) - ga[j] * gb[j] / omega[j]
        };
        let rxx = gram[(j, j)] - project(&v, &gv, &gv);
        let rxt = cross[(j, j)] - project(&v, &gv, &gw);
        let rtt = tilde[(j, j)] - project(&w, &gw, &gw);
        let det = rxx * rtt - rxt * rxt;
        if det <= 1e-14 * rxx.abs().max(rtt.abs()).powi(2) {
            return Err(Error::Singular(format!(
                "x_{j} and its companion are collinear after projecting out the other variables"
            )));
        }
        sigma1.push(rtt / det);
        sigma2.push(-rxt / det);
    }
    Ok(VarianceProfile {
        omega,
        omega1,
        omega2,
        sigma1,
        sigma2,
    })
}

fn block_profile(design: TheoryDesign) -> Result<VarianceProfile> {
    let (rho, s) = match design {
        TheoryDesign::Orthogonal { a } => (0.0, 1.0 - a),
        // Conditional-independence knockoff: s_j = 1 / (G^{-1})_jj.
        TheoryDesign::Block2 { rho } => (rho, 1.0 - rho * rho),
    };
    if !(rho.abs() < 1.0 && s > 0.0 && s < 2.0) {
        return Err(invalid("rho", format!("no valid knockoff for {design:?}")));
    }
    let gram = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    variance_profile(&gram, &[s, s])
}

/// (omega1, omega2) of knockoff-OLS; block designs use the
/// conditional-independence knockoff, orthogonal designs s = 1 - a.
pub fn knockoff_ols_block(design: TheoryDesign) -> Result<(f64, f64)> {
    let prof = block_profile(design)?;
    Ok((prof.omega1[0], prof.omega2[0]))
}

/// (sigma1, sigma2) of the de-randomized Gaussian mirror with the same
/// knockoff as [`knockoff_ols_block`].
pub fn degm_block(design: TheoryDesign) -> Result<(f64, f64)> {
    let prof = block_profile(design)?;
    Ok((prof.sigma1[0], prof.sigma2[0]))
}
