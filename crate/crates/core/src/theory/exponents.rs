//! Closed-form exponents of FP_p(u), FN_p(u) and FP_p(u) + FN_p(u).

use serde::{Deserialize, Serialize};

use super::variance::{degm_block, knockoff_ols_block};
use super::{check_point, ExponentPair, Method, MethodSpec, TheoryDesign};
use crate::error::{Error, Result};

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// sqrt(1 - rho^2).
pub fn xi(rho: f64) -> f64 {
    (1.0 - rho * rho).sqrt()
}

/// sqrt((1 - |rho|) / (1 + |rho|)).
pub fn eta(rho: f64) -> f64 {
    let a = rho.abs();
    ((1.0 - a) / (1.0 + a)).sqrt()
}

/// sqrt(1 - rho^2) - sqrt(1 - |rho|).
pub fn lambda_rho(rho: f64) -> f64 {
    xi(rho) - (1.0 - rho.abs()).sqrt()
}

/// (sqrt(r) - sqrt(u))_+^2, the one-sided threshold distance.
fn gap2(r: f64, u: f64) -> f64 {
    pos(r.sqrt() - u.sqrt()).powi(2)
}

/// Extra exponent of a false positive at j driven by a signal at j + 1
/// under the Lasso path.
fn lasso_fp_neighbor(u: f64, r: f64, rho: f64) -> f64 {
    let (su, sr) = (u.sqrt(), r.sqrt());
    (su - rho.abs() * sr).powi(2) + pos(xi(rho) * sr - eta(rho) * su).powi(2) - gap2(r, u)
}

/// (sqrt(r) - sqrt(u))_+ - [(1 - xi) sqrt(r) - (1 - eta) sqrt(u)]_+.
fn lasso_fn_bracket(u: f64, r: f64, rho: f64) -> f64 {
    let (su, sr) = (u.sqrt(), r.sqrt());
    pos(sr - su) - pos((1.0 - xi(rho)) * sr - (1.0 - eta(rho)) * su)
}

/// Exponent of two nested signals cancelling under negative correlation.
fn nested_cancellation(u: f64, r: f64, rho: f64) -> f64 {
    pos(xi(rho) * r.sqrt() - u.sqrt() / eta(rho)).powi(2)
}

/// Three-way minimum shared by the knockoff results on block designs.
pub fn f_plus_hamm(u: f64, r: f64, theta: f64, rho: f64) -> f64 {
    let second = theta + lasso_fp_neighbor(u, r, rho);
    let third = theta + lasso_fn_bracket(u, r, rho).powi(2);
    u.min(second).min(third)
}

fn lasso_path(theta: f64, r: f64, u: f64, rho: f64) -> ExponentPair {
    let exp_fp = 1.0 - u.min(theta + lasso_fp_neighbor(u, r, rho));
    let isolated = theta + lasso_fn_bracket(u, r, rho).powi(2);
    let exp_fn = if rho >= 0.0 {
        1.0 - isolated
    } else {
        1.0 - isolated.min(2.0 * theta + nested_cancellation(u, r, rho))
    };
    ExponentPair::from_parts(exp_fp, exp_fn, false)
}

/// Equicorrelated knockoff with |rho| >= 1/2, where the tampered design is
/// singular.
fn knockoff_ec_singular(theta: f64, r: f64, u: f64, rho: f64) -> ExponentPair {
    let exp_fp = 1.0 - u.min(theta + lasso_fp_neighbor(u, r, rho));
    let bracket =
        lasso_fn_bracket(u, r, rho) - pos(lambda_rho(rho) * r.sqrt() - eta(rho) * u.sqrt());
    let isolated = theta + bracket.powi(2);
    let exp_fn = if rho >= 0.5 {
        1.0 - isolated
    } else {
        1.0 - isolated.min(2.0 * theta)
    };
    ExponentPair::from_parts(exp_fp, exp_fn, false)
}

fn knockoff_ec_regular(theta: f64, r: f64, u: f64, rho: f64) -> ExponentPair {
    let f = f_plus_hamm(u, r, theta, rho);
    let inner = if rho >= 0.0 {
        f
    } else {
        let nested =
            2.0 * theta + (1.0 + 2.0 * rho).powi(2) * (1.0 - rho) * r / (2.0 * (1.0 + rho));
        f.min(2.0 * theta + nested_cancellation(u, r, rho))
            .min(nested)
    };
    ExponentPair::hamming_only(1.0 - inner)
}

fn knockoff_ci(theta: f64, r: f64, u: f64, rho: f64) -> ExponentPair {
    let f = f_plus_hamm(u, r, theta, rho);
    let inner = if rho >= 0.0 {
        f
    } else {
        f.min(2.0 * theta + nested_cancellation(u, r, rho))
    };
    ExponentPair::hamming_only(1.0 - inner)
}

/// Upper-bound exponents of the least-squares based methods driven by a
/// variance pair (v1, v2): FP <= p^{1 - u / v1} and FN <= p^{1 - theta -
/// min{gap^2, v1 / (v1 + |v2|) r / 2} / v1}.
fn variance_bound(theta: f64, r: f64, u: f64, v1: f64, v2: f64) -> ExponentPair {
    let exp_fp = 1.0 - u / v1;
    let exp_fn = 1.0 - theta - gap2(r, u).min(v1 / (v1 + v2.abs()) * r / 2.0) / v1;
    ExponentPair::from_parts(exp_fp, exp_fn, true)
}

/// Exponents of FP_p(u) and FN_p(u), or of their sum where only the sum is
/// known.
pub fn fp_fn_exponents(spec: &MethodSpec, theta: f64, r: f64, u: f64) -> Result<ExponentPair> {
    spec.validate()?;
    check_point(theta, r, u)?;
    let g = gap2(r, u);
    let pair = match (spec.method, spec.design) {
        (Method::BhMarginal, _) => ExponentPair::from_parts(1.0 - u, 1.0 - theta - g, false),
        (Method::KnockoffSgm, TheoryDesign::Orthogonal { a }) => ExponentPair::from_parts(
            1.0 - u,
            1.0 - theta - ((1.0 - a.abs()) * r / 2.0).min(g),
            false,
        ),
        (Method::KnockoffDif, TheoryDesign::Orthogonal { a }) => {
            ExponentPair::from_parts(1.0 - u, 1.0 - theta - (1.0 - a.abs()) / 2.0 * g, false)
        }
        (Method::GmDif, TheoryDesign::Orthogonal { .. }) => {
            ExponentPair::from_parts(1.0 - u, 1.0 - theta - 0.5 * g, false)
        }
        (Method::GmSgm, design) => {
            let w = 1.0 - design.rho().powi(2);
            ExponentPair::from_parts(1.0 - w * u, 1.0 - theta - w * g.min(r / 2.0), false)
        }
        (Method::OlsPrototype, design) => {
            let w = 1.0 - design.rho().powi(2);
            ExponentPair::from_parts(1.0 - w * u, 1.0 - theta - w * g, false)
        }
        (Method::LassopathPrototype, design) => lasso_path(theta, r, u, design.rho()),
        (Method::KnockoffOls, design) => {
            let (w1, w2) = knockoff_ols_block(design)?;
            variance_bound(theta, r, u, w1, w2)
        }
        (Method::Degm, design) => {
            let (s1, s2) = degm_block(design)?;
            variance_bound(theta, r, u, s1, s2)
        }
        (Method::KnockoffEc, TheoryDesign::Block2 { rho }) => {
            if rho.abs() >= 0.5 {
                knockoff_ec_singular(theta, r, u, rho)
            } else {
                knockoff_ec_regular(theta, r, u, rho)
            }
        }
        (Method::KnockoffCi, TheoryDesign::Block2 { rho }) => knockoff_ci(theta, r, u, rho),
        (m, d) => {
            return Err(Error::Unsupported(format!(
                "no closed-form result for {m} on {} designs",
                d.label()
            )));
        }
    };
    Ok(pair)
}

/// Exponent of FP_p(u) + FN_p(u).
pub fn hamming_exponent(spec: &MethodSpec, theta: f64, r: f64, u: f64) -> Result<f64> {
    Ok(fp_fn_exponents(spec, theta, r, u)?.exp_hamm)
}

/// One point (g_TPR(u), g_FDR(u)) of an FDR-TPR trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub u: f64,
    pub g_tpr: f64,
    pub g_fdr: f64,
}

/// Trade-off curve sampled at `u_grid`.
pub fn tradeoff_curve(
    spec: &MethodSpec,
    theta: f64,
    r: f64,
    u_grid: &[f64],
) -> Result<Vec<TradeoffPoint>> {
    u_grid
        .iter()
        .map(|&u| {
            let pair = fp_fn_exponents(spec, theta, r, u)?;
            match (pair.g_tpr(theta), pair.g_fdr(theta)) {
                (Some(g_tpr), Some(g_fdr)) => Ok(TradeoffPoint { u, g_tpr, g_fdr }),
                _ => Err(Error::Unsupported(format!(
                    "{} on {} designs has only a combined Hamming exponent",
                    spec.method,
                    spec.design.label()
                ))),
            }
        })
        .collect()
}
