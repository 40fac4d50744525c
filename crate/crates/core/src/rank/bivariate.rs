//! Closed-form Lasso path for two variables with correlation rho.

use super::LinearCell;

/// Entry time of the second variable given that the variable with
/// statistic `first` entered first.
///
/// Along the path the first coefficient is `first - lambda * sgn(first)`, so
/// the second correlation is `second - rho * first + rho * sgn(first) * lambda`
/// and it meets the boundary at `+lambda` or `-lambda` depending on the sign
/// of `second - rho * first`.
fn follower(first: f64, second: f64, rho: f64) -> f64 {
    let s = if first >= 0.0 { 1.0 } else { -1.0 };
    let gap = second - rho * first;
    if gap >= 0.0 {
        gap / (1.0 - rho * s)
    } else {
        -gap / (1.0 + rho * s)
    }
}

/// Entry times `(lambda_1, lambda_2)` of the two variables whose marginal
/// statistics are `h1 = x_1'y` and `h2 = x_2'y` and whose correlation is `rho`.
///
/// When |h1| = |h2| both variables enter together at that value.
pub fn bivariate_entry_times(h1: f64, h2: f64, rho: f64) -> (f64, f64) {
    debug_assert!(rho.abs() < 1.0);
    let (a1, a2) = (h1.abs(), h2.abs());
    if a1 == a2 {
        return (a1, a2);
    }
    if a1 > a2 {
        (a1, follower(h1, h2, rho).min(a1))
    } else {
        (follower(h2, h1, rho).min(a2), a2)
    }
}

/// The eight cones of (h1, h2) on which both entry times are linear.
///
/// Cells come in the order: variable 1 first with h1 > 0 and the follower
/// hitting +lambda, then -lambda; variable 1 first with h1 < 0 (same two
/// cases); then the same four with the roles of the variables swapped.
pub fn bivariate_cells(rho: f64) -> Vec<LinearCell<2>> {
    let mut cells = Vec::with_capacity(8);
    for swap in [false, true] {
        for s in [1.0, -1.0] {
            for hit in [1.0, -1.0] {
                // Leader statistic l with sign s dominates the follower f:
                // s*l - f >= 0, s*l + f >= 0, hit*(f - rho*l) >= 0.
                let lead_faces = [[s, -1.0], [s, 1.0], [-hit * rho, hit]];
                // Leader enters at s*l; follower at hit*(f - rho*l)/(1 - hit*rho*s).
                let den = 1.0 - hit * rho * s;
                let lead_entry = [s, 0.0];
                let follow_entry = [-hit * rho / den, hit / den];
                let map = |v: [f64; 2]| if swap { [v[1], v[0]] } else { v };
                let faces = lead_faces.iter().map(|&f| map(f)).collect();
                let entries = if swap {
                    vec![map(follow_entry), map(lead_entry)]
                } else {
                    vec![map(lead_entry), map(follow_entry)]
                };
                cells.push(LinearCell { faces, entries });
            }
        }
    }
    cells
}
