//! Threshold exponent u minimizing the Hamming exponent.

use super::exponents::hamming_exponent;
use super::{check_point, MethodSpec};
use crate::error::Result;

pub const U_GRID_POINTS: usize = 10_000;
const FLAT_TOL: f64 = 1e-12;
const GOLDEN_ITERS: usize = 200;
const BISECT_ITERS: usize = 200;

/// Upper end of the search: beyond it every FP exponent is negative while
/// every FN exponent has reached its ceiling.
fn u_max(spec: &MethodSpec, r: f64) -> f64 {
    let c = spec.design.param().abs();
    4.0 * (r + 1.0) / (1.0 - c * c).powi(2)
}

/// Smallest minimizer of the Hamming exponent over u in [0, u_max]: a dense
/// grid locates the basin, golden-section search refines it, and a
/// bisection moves to the left end of a flat stretch.
pub fn optimal_u(spec: &MethodSpec, theta: f64, r: f64) -> Result<f64> {
    check_point(theta, r, 0.0)?;
    let f = |u: f64| hamming_exponent(spec, theta, r, u);
    let hi = u_max(spec, r);
    let step = hi / (U_GRID_POINTS - 1) as f64;
    let values: Vec<f64> = (0..U_GRID_POINTS)
        .map(|i| f(i as f64 * step))
        .collect::<Result<_>>()?;
    let fmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let first = values
        .iter()
        .position(|&v| v <= fmin + FLAT_TOL)
        .unwrap_or(0);
    if first == 0 {
        return Ok(0.0);
    }
    let lo = (first - 1) as f64 * step;
    let up = ((first + 1).min(U_GRID_POINTS - 1)) as f64 * step;

    // Golden section on [lo, up].
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, up);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..GOLDEN_ITERS {
        if b - a < 1e-15 * (1.0 + b.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let (ug, fg) = if fc <= fd { (c, fc) } else { (d, fd) };
    let (best, mut right) = if fg < fmin {
        (fg, ug)
    } else {
        (fmin, first as f64 * step)
    };

    // Leftmost point of [lo, right] within FLAT_TOL of the best value.
    let mut left = lo;
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (left + right);
        if mid <= left || mid >= right {
            break;
        }
        if f(mid)? <= best + FLAT_TOL {
            right = mid;
        } else {
            left = mid;
        }
    }
    Ok(right)
}

/// Closed-form maximizer of the three-way minimum shared by the block
/// knockoff results, for rho in [0, 1).
pub fn u_star_f_plus(rho: f64, theta: f64, r: f64) -> f64 {
    let denom = ((1.0 + rho).sqrt() + (1.0 - rho).sqrt()).powi(2);
    if r < theta {
        theta
    } else if theta <= 2.0 * rho * r / denom {
        (1.0 + rho) * r / denom
    } else {
        (r + theta).powi(2) / (4.0 * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::Method;

    #[test]
    fn sparse_weak_signal_uses_theta() {
        let spec = MethodSpec::block2(Method::KnockoffCi, 0.3).unwrap();
        let u = optimal_u(&spec, 0.6, 0.4).unwrap();
        assert!((u - 0.6).abs() < 1e-6, "{u}");
        assert_eq!(u_star_f_plus(0.3, 0.6, 0.4), 0.6);
    }

    #[test]
    fn marginal_optimum_matches_dense_grid() {
        let spec = MethodSpec::orthogonal(Method::BhMarginal, 0.0).unwrap();
        for (theta, r) in [(0.3, 2.0), (0.5, 4.0), (0.7, 1.0)] {
            let u = optimal_u(&spec, theta, r).unwrap();
            let obj = |u: f64| {
                (1.0 - u).max(1.0 - theta - (r.sqrt() - u.sqrt()).max(0.0).powi(2))
            };
            let dense = (0..=200_000)
                .map(|i| i as f64 * 1e-4)
                .map(obj)
                .fold(f64::INFINITY, f64::min);
            assert!(obj(u) <= dense + 1e-12);
            // Balance point of 1 - u and 1 - theta - (sqrt r - sqrt u)^2.
            let balance = ((r + theta) / (2.0 * r.sqrt())).powi(2);
            if r > theta {
                assert!((u - balance).abs() < 1e-6, "{u} vs {balance}");
            }
        }
    }
}
