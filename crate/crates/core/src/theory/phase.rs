//! Phase curves h_AR (No Recovery / Almost Full Recovery boundary) and
//! h_ER (Almost Full Recovery / Exact Recovery boundary).

use serde::Serialize;

use super::exponents::hamming_exponent;
use super::optimal::optimal_u;
use super::variance::{degm_block, knockoff_ols_block};
use super::{Method, MethodSpec, TheoryDesign};
use crate::error::{invalid, Error, Result};

pub const PHASE_GRID_POINTS: usize = 200;

/// sqrt(2) - 1 - sqrt(2 - sqrt(2)): below it the equicorrelated knockoff
/// loses to the Lasso path for dense signals.
pub fn rho0() -> f64 {
    2f64.sqrt() - 1.0 - (2.0 - 2f64.sqrt()).sqrt()
}

/// Extra exact-recovery requirement of the equicorrelated knockoff for
/// -1/2 < rho < rho0.
pub fn h5(theta: f64, rho: f64) -> f64 {
    2.0 * (1.0 - 2.0 * theta) * (1.0 + rho) / ((1.0 + 2.0 * rho).powi(2) * (1.0 - rho))
}

/// Phase curves at one sparsity level. `branch` names the term that
/// attains h_ER.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub theta: f64,
    pub h_ar: f64,
    pub h_er: f64,
    pub branch: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseCurves {
    pub spec: MethodSpec,
    pub points: Vec<PhasePoint>,
    pub rho0: f64,
}

impl PhaseCurves {
    pub fn theta(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.theta).collect()
    }

    pub fn h_ar(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.h_ar).collect()
    }

    pub fn h_er(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.h_er).collect()
    }
}

fn exact_base(theta: f64) -> f64 {
    (1.0 + (1.0 - theta).sqrt()).powi(2)
}

fn argmax(terms: &[(f64, &'static str)]) -> (f64, &'static str) {
    terms.iter().copied().fold(
        (f64::NEG_INFINITY, ""),
        |best, t| if t.0 > best.0 { t } else { best },
    )
}

fn lasso_path_er(theta: f64, rho: f64) -> (f64, &'static str) {
    let h1 = exact_base(theta);
    // A null next to a strong signal enters the path with exponent
    // theta + eta^2 u, so exact recovery needs u >= (1 - theta) / eta^2.
    let a = rho.abs();
    let h2 = (1.0 + ((1.0 + a) / (1.0 - a)).sqrt()).powi(2) * (1.0 - theta);
    if rho >= 0.0 {
        return argmax(&[(h1, "h1"), (h2, "h2")]);
    }
    let h3 = if theta < 0.5 {
        (((1.0 + rho) / (1.0 - rho)).sqrt() * (1.0 - 2.0 * theta).sqrt()
            + ((1.0 - rho) / (1.0 + rho)).sqrt() * (1.0 - theta).sqrt())
        .powi(2)
            / (1.0 + rho).powi(2)
    } else {
        0.0
    };
    argmax(&[(h1, "h1"), (h2, "h2"), (h3, "h3")])
}

/// Curves of a least-squares method governed by a variance pair (v1, v2).
fn variance_phase(theta: f64, v1: f64, v2: f64) -> (f64, f64, &'static str) {
    let (er, tag) = argmax(&[
        (v1 * exact_base(theta), "threshold"),
        (2.0 * (v1 + v2.abs()) * (1.0 - theta), "tie"),
    ]);
    (theta * v1, er, tag)
}

/// Closed-form phase curves at `theta`.
pub fn phase_point(spec: &MethodSpec, theta: f64) -> Result<PhasePoint> {
    spec.validate()?;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid("theta", format!("must lie in (0, 1), got {theta}")));
    }
    let rho = spec.rho();
    let (h_ar, h_er, branch) = match (spec.method, spec.design) {
        (Method::BhMarginal, _) => (theta, exact_base(theta), "h1"),
        (Method::KnockoffSgm, TheoryDesign::Orthogonal { a }) => {
            let (er, tag) = argmax(&[
                ((2.0 - 2.0 * theta) / (1.0 - a.abs()), "tie"),
                (exact_base(theta), "h1"),
            ]);
            (theta, er, tag)
        }
        (Method::KnockoffDif, TheoryDesign::Orthogonal { a }) => (
            theta,
            (1.0 + ((2.0 - 2.0 * theta) / (1.0 - a.abs())).sqrt()).powi(2),
            "dif",
        ),
        (Method::GmDif, TheoryDesign::Orthogonal { .. }) => {
            (theta, (1.0 + (2.0 - 2.0 * theta).sqrt()).powi(2), "dif")
        }
        (Method::GmSgm | Method::OlsPrototype, _) => {
            let w = 1.0 - rho * rho;
            (theta / w, exact_base(theta) / w, "h1")
        }
        (Method::LassopathPrototype | Method::KnockoffCi, _) => {
            let (er, tag) = lasso_path_er(theta, rho);
            (theta, er, tag)
        }
        (Method::KnockoffOls, design) => {
            let (v1, v2) = knockoff_ols_block(design)?;
            variance_phase(theta, v1, v2)
        }
        (Method::Degm, design) => {
            let (v1, v2) = degm_block(design)?;
            variance_phase(theta, v1, v2)
        }
        (Method::KnockoffEc, TheoryDesign::Block2 { rho }) => {
            let lasso = lasso_path_er(theta, rho);
            let (er, tag) = if rho >= rho0() {
                lasso
            } else if rho > -0.5 {
                argmax(&[lasso, (h5(theta, rho), "h5")])
            } else if theta > 0.5 {
                lasso
            } else {
                (f64::INFINITY, "infinite")
            };
            (theta, er, tag)
        }
        (m, d) => {
            return Err(Error::Unsupported(format!(
                "no phase curves for {m} on {} designs",
                d.label()
            )));
        }
    };
    Ok(PhasePoint {
        theta,
        h_ar,
        h_er,
        branch,
    })
}

/// Closed-form curves on the midpoint grid theta = (i + 1/2) / 200.
pub fn phase_curves(spec: &MethodSpec) -> Result<PhaseCurves> {
    let points = (0..PHASE_GRID_POINTS)
        .map(|i| phase_point(spec, (i as f64 + 0.5) / PHASE_GRID_POINTS as f64))
        .collect::<Result<_>>()?;
    Ok(PhaseCurves {
        spec: *spec,
        points,
        rho0: rho0(),
    })
}

/// Optimal Hamming exponent min_u of the exponent of FP + FN.
fn best_exponent(spec: &MethodSpec, theta: f64, r: f64) -> Result<f64> {
    let u = optimal_u(spec, theta, r)?;
    hamming_exponent(spec, theta, r, u)
}

const R_CEILING: f64 = 4096.0;
const BOUNDARY_TOL: f64 = 1e-9;

/// Smallest r in [0, R_CEILING] where `pred` holds, assuming it is monotone.
fn boundary(mut pred: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    let mut hi = 16.0;
    while !pred(hi)? {
        if hi >= R_CEILING {
            return Ok(f64::INFINITY);
        }
        hi *= 4.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Phase curves located numerically from the optimized Hamming exponent:
/// h_AR is where it drops below 1 - theta, h_ER where it drops below 0.
pub fn numeric_phase_point(spec: &MethodSpec, theta: f64) -> Result<(f64, f64)> {
    let h_ar = boundary(|r| Ok(best_exponent(spec, theta, r)? < 1.0 - theta - BOUNDARY_TOL))?;
    let h_er = boundary(|r| Ok(best_exponent(spec, theta, r)? < -BOUNDARY_TOL))?;
    Ok((h_ar, h_er))
}
