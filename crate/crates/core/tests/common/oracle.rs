//! Closed-form exponents against the ellipsoid oracle on the full grid.

use fdrlab::theory::{fp_fn_exponents, Method, MethodSpec, RejectionGeometry};

pub const RHO_GRID: [f64; 7] = [-0.7, -0.5, -0.3, 0.0, 0.3, 0.5, 0.7];

pub fn ur_grid() -> Vec<f64> {
    (1..=24).map(|k| 0.25 * k as f64).collect()
}

pub fn theta_grid() -> Vec<f64> {
    (1..=9).map(|k| 0.1 * k as f64).collect()
}

/// Every (method, design) with per-case exponents and a rejection geometry.
pub fn oracle_specs() -> Vec<(String, MethodSpec)> {
    let mut out = Vec::new();
    let orth = |m: Method, a: f64| MethodSpec::orthogonal(m, a).unwrap();
    let block = |m: Method, rho: f64| MethodSpec::block2(m, rho).unwrap();
    out.push(("marginal".to_string(), orth(Method::BhMarginal, 0.0)));
    for a in RHO_GRID {
        out.push((format!("knockoff sgm a={a}"), orth(Method::KnockoffSgm, a)));
        out.push((format!("knockoff dif a={a}"), orth(Method::KnockoffDif, a)));
    }
    out.push((
        "mirror sgm orthogonal".to_string(),
        orth(Method::GmSgm, 0.0),
    ));
    out.push((
        "mirror dif orthogonal".to_string(),
        orth(Method::GmDif, 0.0),
    ));
    for rho in RHO_GRID {
        out.push((
            format!("least squares rho={rho}"),
            block(Method::OlsPrototype, rho),
        ));
        out.push((
            format!("lasso path rho={rho}"),
            block(Method::LassopathPrototype, rho),
        ));
        out.push((format!("mirror sgm rho={rho}"), block(Method::GmSgm, rho)));
        if rho.abs() >= 0.5 {
            out.push((
                format!("equicorrelated knockoff rho={rho}"),
                block(Method::KnockoffEc, rho),
            ));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub label: String,
    pub theta: f64,
    pub r: f64,
    pub u: f64,
    pub closed: (f64, f64),
    pub oracle: (f64, f64),
}

#[derive(Debug, Default)]
pub struct OracleReport {
    pub comparisons: usize,
    pub max_abs_diff: f64,
    pub mismatches: Vec<Mismatch>,
}

pub fn run(specs: &[(String, MethodSpec)], tol: f64) -> OracleReport {
    let mut report = OracleReport::default();
    let grid = ur_grid();
    let thetas = theta_grid();
    for (label, spec) in specs {
        for &u in &grid {
            let geom = RejectionGeometry::new(spec, u).unwrap();
            for &r in &grid {
                let cases = geom.case_exponents(r).unwrap();
                for &theta in &thetas {
                    let oracle = cases.assemble(theta);
                    let closed = fp_fn_exponents(spec, theta, r, u).unwrap();
                    let c = (closed.exp_fp.unwrap(), closed.exp_fn.unwrap());
                    let o = (oracle.exp_fp.unwrap(), oracle.exp_fn.unwrap());
                    let d = (c.0 - o.0).abs().max((c.1 - o.1).abs());
                    report.comparisons += 1;
                    report.max_abs_diff = report.max_abs_diff.max(d);
                    if d >= tol {
                        report.mismatches.push(Mismatch {
                            label: label.clone(),
                            theta,
                            r,
                            u,
                            closed: c,
                            oracle: o,
                        });
                    }
                }
            }
        }
    }
    report
}
