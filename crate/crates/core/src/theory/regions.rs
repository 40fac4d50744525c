//! Rejection regions of the selection rules in the space of standardized
//! statistics, and the exponents they imply through the ellipsoid oracle.
//!
//! For a variable j the relevant statistics h (marginal correlations for
//! the path rankers, least-squares coefficients for the mirror) are
//! Gaussian with covariance sigma / (2 log p) and a mean that is linear in
//! (beta_j, beta_{j+1}) / tau_p. The score is piecewise linear on a fixed
//! set of cones, so "score above sqrt(u)" and its complement are finite
//! unions of polyhedra.

use serde::{Deserialize, Serialize};

use super::ellipsoid::{ellipsoid_exponent, EllipsoidProblem, HalfSpace, Polyhedron, Region};
use super::{check_point, ExponentPair, Method, MethodSpec, TheoryDesign};
use crate::error::{Error, Result};
use crate::mirror_stats::StatKind;
use crate::rank::{bivariate_cells, quad_cells, quad_gram, LinearCell};

/// Region families with a closed-form half-space listing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    LassoPath,
    Ols,
}

/// Whether (h1, h2) = (x_j'y, x_{j+1}'y) / sqrt(2 log p) leads to selecting
/// j at threshold sqrt(2u log p) on a 2x2 block with correlation `rho`.
pub fn rejection_region_membership(h1: f64, h2: f64, rho: f64, u: f64, which: RegionKind) -> bool {
    let su = u.sqrt();
    match which {
        RegionKind::Ols => (h1 - rho * h2).abs() > (1.0 - rho * rho) * su,
        RegionKind::LassoPath => {
            if rho < 0.0 {
                return rejection_region_membership(h1, -h2, -rho, u, which);
            }
            let lin = h1 - rho * h2;
            (lin > (1.0 - rho) * su && h1 > su)
                || lin > (1.0 + rho) * su
                || (lin < -(1.0 - rho) * su && h1 < -su)
                || lin < -(1.0 + rho) * su
        }
    }
}

/// How the score of variable j is read off a cell's linear entries.
#[derive(Debug, Clone, Copy)]
enum CellScore {
    Single(usize),
    Mirror {
        own: usize,
        twin: usize,
        kind: StatKind,
    },
}

/// Region geometry of one method at one threshold, in D coordinates.
#[derive(Debug, Clone)]
struct Geometry<const D: usize> {
    sigma: [[f64; D]; D],
    /// Mean per unit of beta_j / tau and of beta_{j+1} / tau, before the
    /// sqrt(r) scale.
    mean_basis: [[f64; D]; 2],
    selected: Region<D>,
    unselected: Region<D>,
}

impl<const D: usize> Geometry<D> {
    fn build(
        sigma: [[f64; D]; D],
        mean_basis: [[f64; D]; 2],
        cells: &[LinearCell<D>],
        score: CellScore,
        u: f64,
    ) -> Self {
        let su = u.sqrt();
        let mut selected = Vec::new();
        let mut unselected = Vec::new();
        for cell in cells {
            let base: Vec<HalfSpace<D>> =
                cell.faces.iter().map(|f| HalfSpace::new(*f, 0.0)).collect();
            let with = |extra: &[HalfSpace<D>]| {
                let mut faces = base.clone();
                faces.extend_from_slice(extra);
                Polyhedron::new(faces)
            };
            match score {
                CellScore::Single(k) => {
                    let e = cell.entries[k];
                    selected.push(with(&[HalfSpace::new(e, su)]));
                    unselected.push(with(&[HalfSpace::new(neg(e), -su)]));
                }
                CellScore::Mirror { own, twin, kind } => {
                    let (z, zt) = (cell.entries[own], cell.entries[twin]);
                    let lead = sub(z, zt);
                    match kind {
                        StatKind::SignedMax => {
                            // W = Z if Z > Z~ else -Z~; W > sqrt(u) iff Z > Z~ and Z > sqrt(u).
                            selected
                                .push(with(&[HalfSpace::new(lead, 0.0), HalfSpace::new(z, su)]));
                            unselected.push(with(&[HalfSpace::new(neg(lead), 0.0)]));
                            unselected.push(with(&[HalfSpace::new(neg(z), -su)]));
                        }
                        StatKind::Difference => {
                            selected.push(with(&[HalfSpace::new(lead, su)]));
                            unselected.push(with(&[HalfSpace::new(neg(lead), -su)]));
                        }
                    }
                }
            }
        }
        Geometry {
            sigma,
            mean_basis,
            selected: Region::new(selected),
            unselected: Region::new(unselected),
        }
    }

    fn exponent(&self, r: f64, bj: f64, bnext: f64, target_selected: bool) -> Result<f64> {
        let sr = r.sqrt();
        let mut mu = [0.0; D];
        for (d, m) in mu.iter_mut().enumerate() {
            *m = sr * (bj * self.mean_basis[0][d] + bnext * self.mean_basis[1][d]);
        }
        let region = if target_selected {
            &self.selected
        } else {
            &self.unselected
        };
        let sol = ellipsoid_exponent(&EllipsoidProblem {
            mu,
            sigma: self.sigma,
            region,
        })?;
        Ok(sol.b)
    }

    fn cases(&self, r: f64) -> Result<CaseExponents> {
        Ok(CaseExponents {
            null_null: self.exponent(r, 0.0, 0.0, true)?,
            null_signal: self.exponent(r, 0.0, 1.0, true)?,
            signal_null: self.exponent(r, 1.0, 0.0, false)?,
            signal_signal: self.exponent(r, 1.0, 1.0, false)?,
        })
    }
}

fn neg<const D: usize>(a: [f64; D]) -> [f64; D] {
    a.map(|v| -v)
}

fn sub<const D: usize>(a: [f64; D], b: [f64; D]) -> [f64; D] {
    let mut out = a;
    for (o, v) in out.iter_mut().zip(b) {
        *o -= v;
    }
    out
}

/// Exponents b(beta_j, beta_{j+1}) of a selection error at j in each of the
/// four configurations of the block. The null cases measure the selected
/// region, the signal cases the unselected one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseExponents {
    pub null_null: f64,
    pub null_signal: f64,
    pub signal_null: f64,
    pub signal_signal: f64,
}

impl CaseExponents {
    /// Weight each configuration by its prior rate: one extra signal costs
    /// p^{-theta}.
    pub fn assemble(&self, theta: f64) -> ExponentPair {
        let fp = self.null_null.min(theta + self.null_signal);
        let fn_ = (theta + self.signal_null).min(2.0 * theta + self.signal_signal);
        ExponentPair::from_parts(1.0 - fp, 1.0 - fn_, false)
    }
}

/// Rejection geometry of a method at threshold exponent u.
#[derive(Debug, Clone)]
pub struct RejectionGeometry {
    inner: AnyGeometry,
}

#[derive(Debug, Clone)]
enum AnyGeometry {
    One(Geometry<1>),
    Two(Geometry<2>),
    Three(Geometry<3>),
}

impl RejectionGeometry {
    /// Supported: marginal ranking, orthogonal knockoff and Gaussian mirror,
    /// least-squares and Lasso-path prototypes, Gaussian mirror on block
    /// designs, and the equicorrelated knockoff on blocks with |rho| >= 1/2.
    pub fn new(spec: &MethodSpec, u: f64) -> Result<Self> {
        spec.validate()?;
        let inner = match (spec.method, spec.design) {
            (Method::BhMarginal, _) => {
                let cells = [
                    LinearCell {
                        faces: vec![[1.0]],
                        entries: vec![[1.0]],
                    },
                    LinearCell {
                        faces: vec![[-1.0]],
                        entries: vec![[-1.0]],
                    },
                ];
                AnyGeometry::One(Geometry::build(
                    [[1.0]],
                    [[1.0], [0.0]],
                    &cells,
                    CellScore::Single(0),
                    u,
                ))
            }
            (Method::KnockoffSgm | Method::KnockoffDif, TheoryDesign::Orthogonal { a }) => {
                let kind = if spec.method == Method::KnockoffSgm {
                    StatKind::SignedMax
                } else {
                    StatKind::Difference
                };
                AnyGeometry::Two(Geometry::build(
                    [[1.0, a], [a, 1.0]],
                    [[1.0, a], [0.0, 0.0]],
                    &bivariate_cells(a),
                    CellScore::Mirror {
                        own: 0,
                        twin: 1,
                        kind,
                    },
                    u,
                ))
            }
            (Method::GmSgm | Method::GmDif, design) => {
                let kind = if spec.method == Method::GmSgm {
                    StatKind::SignedMax
                } else {
                    StatKind::Difference
                };
                // Coefficients (b+, b-) of x_j +/- c z_j: each carries beta_j / 2
                // and their covariance is omega_j / 2 times the identity.
                let omega = 1.0 / (1.0 - design.rho().powi(2));
                let v = omega / 2.0;
                AnyGeometry::Two(Geometry::build(
                    [[v, 0.0], [0.0, v]],
                    [[0.5, 0.5], [0.0, 0.0]],
                    &mirror_cells(),
                    CellScore::Mirror {
                        own: 0,
                        twin: 1,
                        kind,
                    },
                    u,
                ))
            }
            (Method::OlsPrototype, design) => {
                let rho = design.rho();
                AnyGeometry::Two(Geometry::build(
                    [[1.0, rho], [rho, 1.0]],
                    [[1.0, rho], [rho, 1.0]],
                    &ols_cells(rho),
                    CellScore::Single(0),
                    u,
                ))
            }
            (Method::LassopathPrototype, design) => {
                let rho = design.rho();
                AnyGeometry::Two(Geometry::build(
                    [[1.0, rho], [rho, 1.0]],
                    [[1.0, rho], [rho, 1.0]],
                    &bivariate_cells(rho),
                    CellScore::Single(0),
                    u,
                ))
            }
            (Method::KnockoffEc, TheoryDesign::Block2 { rho }) if rho.abs() >= 0.5 => {
                let (sigma, basis) = quad_moments(rho);
                AnyGeometry::Three(Geometry::build(
                    sigma,
                    basis,
                    &quad_cells(rho.abs()),
                    CellScore::Mirror {
                        own: 0,
                        twin: 2,
                        kind: StatKind::SignedMax,
                    },
                    u,
                ))
            }
            (m, d) => {
                return Err(Error::Unsupported(format!(
                    "no rejection geometry for {m} on {} designs",
                    d.label()
                )))
            }
        };
        Ok(RejectionGeometry { inner })
    }

    pub fn case_exponents(&self, r: f64) -> Result<CaseExponents> {
        match &self.inner {
            AnyGeometry::One(g) => g.cases(r),
            AnyGeometry::Two(g) => g.cases(r),
            AnyGeometry::Three(g) => g.cases(r),
        }
    }

    pub fn dimension(&self) -> usize {
        match &self.inner {
            AnyGeometry::One(_) => 1,
            AnyGeometry::Two(_) => 2,
            AnyGeometry::Three(_) => 3,
        }
    }

    /// Numbers of nonempty selected and unselected pieces.
    pub fn piece_counts(&self) -> (usize, usize) {
        match &self.inner {
            AnyGeometry::One(g) => (g.selected.pieces().len(), g.unselected.pieces().len()),
            AnyGeometry::Two(g) => (g.selected.pieces().len(), g.unselected.pieces().len()),
            AnyGeometry::Three(g) => (g.selected.pieces().len(), g.unselected.pieces().len()),
        }
    }
}

/// Case exponents of `spec` at (r, u) from the region geometry.
pub fn case_exponents(spec: &MethodSpec, r: f64, u: f64) -> Result<CaseExponents> {
    RejectionGeometry::new(spec, u)?.case_exponents(r)
}

/// FP and FN exponents recomputed from the rejection region.
pub fn oracle_exponents(spec: &MethodSpec, theta: f64, r: f64, u: f64) -> Result<ExponentPair> {
    check_point(theta, r, u)?;
    Ok(case_exponents(spec, r, u)?.assemble(theta))
}

/// Cones of (b+, b-) on which Z = |b+ + b-| and Z~ = |b+ - b-| are linear.
fn mirror_cells() -> Vec<LinearCell<2>> {
    let mut cells = Vec::with_capacity(4);
    for s in [1.0, -1.0] {
        for t in [1.0, -1.0] {
            cells.push(LinearCell {
                faces: vec![[s, s], [t, -t]],
                entries: vec![[s, s], [t, -t]],
            });
        }
    }
    cells
}

/// Two half-planes on which |beta_hat_j| = |h1 - rho h2| / (1 - rho^2) is linear.
fn ols_cells(rho: f64) -> Vec<LinearCell<2>> {
    let w = 1.0 / (1.0 - rho * rho);
    [1.0, -1.0]
        .into_iter()
        .map(|s| LinearCell {
            faces: vec![[s, -s * rho]],
            entries: vec![[s * w, -s * rho * w]],
        })
        .collect()
}

/// Covariance and mean basis of (m, d1, d2) for the singular equicorrelated
/// block, computed from its 4x4 Gram. The map from the four statistics is
/// m = mean of (h1, f h2, h3, f h4), d1 = (h1 - h3) / 2, d2 = f (h2 - h4) / 2
/// with f the sign of rho.
fn quad_moments(rho: f64) -> ([[f64; 3]; 3], [[f64; 3]; 2]) {
    let f = if rho < 0.0 { -1.0 } else { 1.0 };
    let t = [
        [0.25, 0.25 * f, 0.25, 0.25 * f],
        [0.5, 0.0, -0.5, 0.0],
        [0.0, 0.5 * f, 0.0, -0.5 * f],
    ];
    let q = quad_gram(rho);
    let mut sigma = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut v = 0.0;
            for i in 0..4 {
                for k in 0..4 {
                    v += t[a][i] * q[(i, k)] * t[b][k];
                }
            }
            sigma[a][b] = v;
        }
    }
    let mut basis = [[0.0; 3]; 2];
    for (col, row) in basis.iter_mut().enumerate() {
        for a in 0..3 {
            row[a] = (0..4).map(|i| t[a][i] * q[(i, col)]).sum();
        }
    }
    (sigma, basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::bivariate_entry_times;
    use proptest::prelude::*;

    #[test]
    fn listed_example_point() {
        assert!(rejection_region_membership(
            1.2,
            0.3,
            0.5,
            1.0,
            RegionKind::LassoPath
        ));
        assert!(rejection_region_membership(
            1.2,
            0.3,
            0.5,
            1.0,
            RegionKind::Ols
        ));
        for which in [RegionKind::LassoPath, RegionKind::Ols] {
            for u in [0.1, 1.0, 3.0] {
                assert!(!rejection_region_membership(0.0, 0.0, 0.4, u, which));
            }
        }
    }

    #[test]
    fn quad_moments_are_diagonal() {
        for rho in [0.5, 0.7, -0.6] {
            let (sigma, basis) = quad_moments(rho);
            let a = rho.abs();
            let expected = [a, 1.0 - a, 1.0 - a];
            for i in 0..3 {
                for j in 0..3 {
                    let e = if i == j { expected[i] } else { 0.0 };
                    assert!((sigma[i][j] - e).abs() < 1e-12);
                }
            }
            assert!((basis[0][0] - a).abs() < 1e-12 && (basis[0][1] - (1.0 - a)).abs() < 1e-12);
            assert!((basis[1][0] - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn marginal_halfspace_exponent() {
        let spec = MethodSpec::orthogonal(Method::BhMarginal, 0.0).unwrap();
        let cases = case_exponents(&spec, 2.0, 0.5).unwrap();
        assert!((cases.null_null - 0.5).abs() < 1e-12);
        assert!((cases.signal_null - (2f64.sqrt() - 0.5f64.sqrt()).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn signed_max_knockoff_ellipsoid() {
        for a in [-0.6, 0.0, 0.4] {
            for (r, u) in [(2.0, 0.5), (4.0, 0.25), (1.0, 2.0)] {
                let spec = MethodSpec::orthogonal(Method::KnockoffSgm, a).unwrap();
                let b = case_exponents(&spec, r, u).unwrap().signal_null;
                let gap = (r as f64).sqrt() - (u as f64).sqrt();
                let expected = (gap.max(0.0)).powi(2).min((1.0 - a.abs()) * r / 2.0);
                assert!(
                    (b - expected).abs() < 1e-10,
                    "a={a} r={r} u={u}: {b} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn lasso_neighbor_signal_ellipsoid() {
        // Null at j with a signal at j + 1, rho >= 0, at points where the
        // mean sits in the region between the two listed branches.
        let rho: f64 = 0.5;
        let spec = MethodSpec::block2(Method::LassopathPrototype, rho).unwrap();
        for (r, u) in [(2.0f64, 1.0f64), (4.0, 1.5), (1.0, 0.8)] {
            let b = case_exponents(&spec, r, u).unwrap().null_signal;
            let k = (1.0 - rho) / (1.0 + rho);
            let (su, sr) = (u.sqrt(), r.sqrt());
            let expected =
                k * u + (su - sr).max(0.0).powi(2) - k * (su - (1.0 + rho) * sr).max(0.0).powi(2);
            assert!(
                (b - expected).abs() < 1e-9,
                "r={r} u={u}: {b} vs {expected}"
            );
        }
    }

    proptest! {
        #[test]
        fn listing_matches_path_entry(h1 in -4.0..4.0f64, h2 in -4.0..4.0f64, rho in -0.9..0.9f64, u in 0.05..4.0f64) {
            let (w, _) = bivariate_entry_times(h1, h2, rho);
            let margin = (w - u.sqrt()).abs();
            prop_assume!(margin > 1e-9);
            prop_assert_eq!(rejection_region_membership(h1, h2, rho, u, RegionKind::LassoPath), w > u.sqrt());
        }

        #[test]
        fn listing_matches_cells(h1 in -4.0..4.0f64, h2 in -4.0..4.0f64, rho in -0.9..0.9f64, u in 0.05..4.0f64) {
            for (which, method) in [(RegionKind::LassoPath, Method::LassopathPrototype), (RegionKind::Ols, Method::OlsPrototype)] {
                let spec = MethodSpec::block2(method, rho).unwrap();
                let geom = RejectionGeometry::new(&spec, u).unwrap();
                let AnyGeometry::Two(g) = &geom.inner else { unreachable!() };
                let h = [h1, h2];
                let inside = g.selected.contains(&h);
                let outside = g.unselected.contains(&h);
                prop_assume!(inside != outside);
                prop_assert_eq!(rejection_region_membership(h1, h2, rho, u, which), inside);
            }
        }

        #[test]
        fn negative_rho_reflection(h1 in -4.0..4.0f64, h2 in -4.0..4.0f64, rho in -0.9..0.0f64, u in 0.05..4.0f64) {
            prop_assert_eq!(
                rejection_region_membership(h1, h2, rho, u, RegionKind::LassoPath),
                rejection_region_membership(h1, -h2, -rho, u, RegionKind::LassoPath)
            );
        }
    }
}
