//! Rare/Weak coefficient vectors and Gaussian responses.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{invalid, Error, Result};
use crate::seeds::stream;

/// Noise standard deviation of the model.
pub const NOISE_SD: f64 = 1.0;

/// Sparsity and strength exponents of the Rare/Weak model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    /// Sparsity exponent: a fraction p^-theta of coefficients is nonzero.
    pub theta: f64,
    /// Strength exponent: nonzero coefficients have magnitude sqrt(2 r log p).
    pub r: f64,
    /// Draw signs uniformly when true; all signals are positive otherwise.
    pub signed: bool,
    pub p: usize,
}

impl SignalConfig {
    pub fn new(theta: f64, r: f64, signed: bool, p: usize) -> Result<Self> {
        let cfg = SignalConfig {
            theta,
            r,
            signed,
            p,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(invalid(
                "theta",
                format!("must lie in (0, 1), got {}", self.theta),
            ));
        }
        // r = 0 is accepted as the no-signal baseline of a sweep.
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(invalid(
                "r",
                format!("must be a nonnegative finite number, got {}", self.r),
            ));
        }
        if self.p < 2 {
            return Err(invalid("p", format!("need p >= 2, got {}", self.p)));
        }
        Ok(())
    }

    /// Probability that a coefficient is nonzero, p^-theta.
    pub fn epsilon(&self) -> f64 {
        (self.p as f64).powf(-self.theta)
    }

    /// Signal magnitude sqrt(2 r log p).
    pub fn tau(&self) -> f64 {
        (2.0 * self.r * (self.p as f64).ln()).sqrt()
    }

    /// Expected number of signals, p^(1 - theta).
    pub fn expected_support(&self) -> f64 {
        self.p as f64 * self.epsilon()
    }
}

/// Coefficient vector with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaVector {
    beta: DVector<f64>,
    support: Vec<usize>,
}

impl BetaVector {
    /// Wrap an explicit coefficient vector.
    pub fn from_vec(beta: Vec<f64>) -> Self {
        let support = beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect();
        BetaVector {
            beta: DVector::from_vec(beta),
            support,
        }
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_signal(&self, j: usize) -> bool {
        self.beta[j] != 0.0
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// Draw coefficients i.i.d. from (1 - eps) point mass at 0 plus eps at +tau
/// (or eps/2 at each of +tau and -tau when signed).
///
/// Support membership uses one uniform per coordinate and signs use a second
/// independent stream, so the support does not depend on `signed` or `r`.
pub fn draw_beta(config: &SignalConfig, seed: u64) -> Result<BetaVector> {
    config.validate()?;
    let eps = config.epsilon();
    let tau = config.tau();
    let mut support_rng = stream(seed);
    let mut sign_rng = stream(seed ^ 0xA5A5_5A5A_DEAD_BEEF);
    let mut beta = vec![0.0; config.p];
    // Keep the index set explicitly: with tau = 0 it is invisible in beta.
    let mut support = Vec::new();
    for (j, b) in beta.iter_mut().enumerate() {
        let active = support_rng.random::<f64>() < eps;
        let negative = sign_rng.random::<bool>();
        if active {
            *b = if config.signed && negative { -tau } else { tau };
            support.push(j);
        }
    }
    Ok(BetaVector {
        beta: DVector::from_vec(beta),
        support,
    })
}

/// Response vector y = X beta + sigma z.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub y: DVector<f64>,
    pub sigma: f64,
}

/// Draw y = X beta + z with standard Gaussian noise.
pub fn draw_response(x: &DesignMatrix, beta: &BetaVector, seed: u64) -> Result<Response> {
    draw_response_with_sigma(x, beta, NOISE_SD, seed)
}

/// Same as [`draw_response`] with an explicit noise level (sigma = 0 gives
/// the noiseless response used by tests).
pub fn draw_response_with_sigma(
    x: &DesignMatrix,
    beta: &BetaVector,
    sigma: f64,
    seed: u64,
) -> Result<Response> {
    if beta.len() != x.p() {
        return Err(Error::Dimension(format!(
            "beta has length {}, design has {} columns",
            beta.len(),
            x.p()
        )));
    }
    let n = x.n();
    let mut y = DVector::zeros(n);
    for &j in beta.support() {
        y.axpy(beta.beta[j], &x.x().column(j), 1.0);
    }
    if sigma != 0.0 {
        let mut rng = stream(seed);
        for v in y.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
    Ok(Response { y, sigma })
}
