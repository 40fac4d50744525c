//! Error exponents, trade-off curves and phase curves of the selection
//! methods, with a geometric oracle that recomputes the exponents from the
//! rejection regions.
//!
//! All exponents drop the multi-log factor: FP_p(u) = p^{exp_fp} up to
//! factors that are p^{o(1)}.

mod ellipsoid;
mod exponents;
mod optimal;
mod phase;
mod regions;
mod variance;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use ellipsoid::{
    ellipsoid_exponent, EllipsoidProblem, EllipsoidSolution, HalfSpace, Polyhedron, Region,
};
pub use exponents::{
    eta, f_plus_hamm, fp_fn_exponents, hamming_exponent, lambda_rho, tradeoff_curve, xi,
    TradeoffPoint,
};
pub use optimal::{optimal_u, u_star_f_plus, U_GRID_POINTS};
pub use phase::{
    h5, numeric_phase_point, phase_curves, phase_point, rho0, PhaseCurves, PhasePoint,
    PHASE_GRID_POINTS,
};
pub use regions::{
    case_exponents, oracle_exponents, rejection_region_membership, CaseExponents, RegionKind,
    RejectionGeometry,
};
pub use variance::{
    degm_block, knockoff_ols_block, variance_profile, variance_profile_from_bundle, VarianceProfile,
};

/// Selection methods with closed-form exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BhMarginal,
    KnockoffSgm,
    KnockoffDif,
    GmSgm,
    GmDif,
    OlsPrototype,
    LassopathPrototype,
    KnockoffOls,
    Degm,
    KnockoffEc,
    KnockoffCi,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::BhMarginal,
        Method::KnockoffSgm,
        Method::KnockoffDif,
        Method::GmSgm,
        Method::GmDif,
        Method::OlsPrototype,
        Method::LassopathPrototype,
        Method::KnockoffOls,
        Method::Degm,
        Method::KnockoffEc,
        Method::KnockoffCi,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::BhMarginal => "bh_marginal",
            Method::KnockoffSgm => "knockoff_sgm",
            Method::KnockoffDif => "knockoff_dif",
            Method::GmSgm => "gm_sgm",
            Method::GmDif => "gm_dif",
            Method::OlsPrototype => "ols_prototype",
            Method::LassopathPrototype => "lassopath_prototype",
            Method::KnockoffOls => "knockoff_ols",
            Method::Degm => "degm",
            Method::KnockoffEc => "knockoff_ec",
            Method::KnockoffCi => "knockoff_ci",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts snake_case or kebab-case labels.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().replace('-', "_").to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.label() == key)
            .ok_or_else(|| invalid("method", format!("unknown method `{s}`")))
    }
}

/// Design class of a closed-form result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TheoryDesign {
    /// G = I; `a` is the correlation between a variable and its knockoff
    /// (s = 1 - a) and is ignored by methods without knockoffs.
    Orthogonal { a: f64 },
    /// 2x2 block-diagonal Gram with within-block correlation `rho`.
    Block2 { rho: f64 },
}

impl TheoryDesign {
    pub fn label(&self) -> &'static str {
        match self {
            TheoryDesign::Orthogonal { .. } => "orthogonal",
            TheoryDesign::Block2 { .. } => "block2",
        }
    }

    /// a for orthogonal designs, rho for block designs.
    pub fn param(&self) -> f64 {
        match *self {
            TheoryDesign::Orthogonal { a } => a,
            TheoryDesign::Block2 { rho } => rho,
        }
    }

    /// Within-block correlation; zero for orthogonal designs.
    pub fn rho(&self) -> f64 {
        match *self {
            TheoryDesign::Orthogonal { .. } => 0.0,
            TheoryDesign::Block2 { rho } => rho,
        }
    }
}

/// A method applied to a design class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    pub design: TheoryDesign,
}

impl MethodSpec {
    pub fn new(method: Method, design: TheoryDesign) -> Result<Self> {
        let spec = MethodSpec { method, design };
        spec.validate()?;
        Ok(spec)
    }

    pub fn orthogonal(method: Method, a: f64) -> Result<Self> {
        Self::new(method, TheoryDesign::Orthogonal { a })
    }

    pub fn block2(method: Method, rho: f64) -> Result<Self> {
        Self::new(method, TheoryDesign::Block2 { rho })
    }

    /// Rejects parameters outside (-1, 1) and pairs without a result.
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match self.design {
            TheoryDesign::Orthogonal { a } => ("a", a),
            TheoryDesign::Block2 { rho } => ("rho", rho),
        };
        if !(v.is_finite() && v.abs() < 1.0) {
            return Err(invalid(name, format!("must lie in (-1, 1), got {v}")));
        }
        use Method::*;
        let supported = match self.design {
            TheoryDesign::Orthogonal { .. } => !matches!(self.method, KnockoffEc | KnockoffCi),
            TheoryDesign::Block2 { .. } => {
                !matches!(self.method, BhMarginal | KnockoffSgm | KnockoffDif | GmDif)
            }
        };
        if !supported {
            return Err(Error::Unsupported(format!(
                "no closed-form result for {} on {} designs",
                self.method,
                self.design.label()
            )));
        }
        Ok(())
    }

    pub fn rho(&self) -> f64 {
        self.design.rho()
    }
}

/// Exponents of FP_p(u), FN_p(u) and their sum.
///
/// `exp_fp` and `exp_fn` are None when only the sum is known. `bound`
/// marks upper bounds rather than exact rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    pub exp_fp: Option<f64>,
    pub exp_fn: Option<f64>,
    pub exp_hamm: f64,
    pub bound: bool,
}

impl ExponentPair {
    pub fn from_parts(exp_fp: f64, exp_fn: f64, bound: bool) -> Self {
        ExponentPair {
            exp_fp: Some(exp_fp),
            exp_fn: Some(exp_fn),
            exp_hamm: exp_fp.max(exp_fn),
            bound,
        }
    }

    pub fn hamming_only(exp_hamm: f64) -> Self {
        ExponentPair {
            exp_fp: None,
            exp_fn: None,
            exp_hamm,
            bound: false,
        }
    }

    /// FDR_p = p^{-g_FDR}: the false positives against the p^{1-theta} true
    /// positives, floored at zero.
    pub fn g_fdr(&self, theta: f64) -> Option<f64> {
        self.exp_fp.map(|e| (1.0 - theta - e).max(0.0))
    }

    /// 1 - TPR_p = p^{-g_TPR}: the false negatives per signal.
    pub fn g_tpr(&self, theta: f64) -> Option<f64> {
        self.exp_fn.map(|e| 1.0 - theta - e)
    }
}

pub(crate) fn check_point(theta: f64, r: f64, u: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid("theta", format!("must lie in (0, 1), got {theta}")));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(invalid(
            "r",
            format!("must be finite and nonnegative, got {r}"),
        ));
    }
    if !(u.is_finite() && u >= 0.0) {
        return Err(invalid(
            "u",
            format!("must be finite and nonnegative, got {u}"),
        ));
    }
    Ok(())
}
