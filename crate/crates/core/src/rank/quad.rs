//! Closed-form Lasso path for one 2x2 block of an equicorrelated knockoff
//! design with |rho| >= 1/2.
//!
//! With s = 2 - 2|rho| the four columns (x_j, x_{j+1}, x~_j, x~_{j+1}) are
//! linearly dependent, so the generic homotopy cannot run through them. For
//! rho >= 1/2 the statistics lie on the subspace h = (m + d1, m + d2, m - d1,
//! m - d2); for rho <= -1/2 the same holds after negating the second and the
//! fourth statistic. The path is piecewise linear in (m, d1, d2) over six
//! canonical cones (d1 >= d2 >= 0) and their images under the symmetries
//! d1 -> -d1 (swap x_j with x~_j), d2 -> -d2 (swap x_{j+1} with x~_{j+1}) and
//! d1 <-> d2 (swap the two pairs).

use nalgebra::DMatrix;

use super::{EntryTimes, LinearCell};

/// Gram matrix of (x_j, x_{j+1}, x~_j, x~_{j+1}) for the equicorrelated
/// knockoff of a 2x2 block with correlation `rho`, |rho| >= 1/2.
pub fn quad_gram(rho: f64) -> DMatrix<f64> {
    let c = 2.0 * rho.abs() - 1.0;
    DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, rho, c, rho, //
            rho, 1.0, rho, c, //
            c, rho, 1.0, rho, //
            rho, c, rho, 1.0,
        ],
    )
}

/// Correlation of a 4x4 block if it matches [`quad_gram`] with |rho| >= 1/2.
pub fn is_degenerate_quad_gram(g: &DMatrix<f64>) -> Option<f64> {
    if g.shape() != (4, 4) {
        return None;
    }
    let rho = g[(0, 1)];
    if rho.abs() < 0.5 - 1e-12 {
        return None;
    }
    let target = quad_gram(rho);
    let close = g
        .iter()
        .zip(target.iter())
        .all(|(a, b)| (a - b).abs() < 1e-8);
    close.then_some(rho)
}

/// Cells in canonical coordinates (m, D1, D2) with D1 >= D2 >= 0, and the
/// entry times of the four canonical variables on each.
fn canonical_cells(rho: f64) -> Vec<LinearCell<3>> {
    let r = rho;
    let k = r / (1.0 - r);
    let q = (1.0 - r) / r;
    let lead = [1.0, 1.0, 0.0];
    let lead_tilde = [-1.0, 1.0, 0.0];
    let second = [1.0, -k, 1.0 / (1.0 - r)];
    let second_tilde = [-1.0, -k, 1.0 / (1.0 - r)];
    let pair_late = [1.0, -k, -k];
    let pair_late_tilde = [-1.0, -k, -k];
    let pair_cross = [-(1.0 - r) / (2.0 * r), 0.5, 0.5];
    let pair_cross_tilde = [(1.0 - r) / (2.0 * r), 0.5, 0.5];
    let d2 = [0.0, 0.0, 1.0];

    let common = [[0.0, 1.0, -1.0], [0.0, 0.0, 1.0]];
    let raw: Vec<(Vec<[f64; 3]>, [[f64; 3]; 4])> = vec![
        // Mean dominates: both original variables lead, knockoffs trail together.
        (
            vec![[1.0 - r, -r, -r]],
            [lead, second, pair_late, pair_late],
        ),
        (
            vec![[1.0 - r, -r, r], [-(1.0 - r), r, r]],
            [lead, second, pair_cross, pair_cross],
        ),
        // Small positive mean: x_j then x~_j, the second pair ties at D2.
        (
            vec![[1.0, 0.0, 0.0], [-(1.0 - r), r, -r]],
            [lead, d2, [-q, 1.0, 0.0], d2],
        ),
        (
            vec![[-1.0, 0.0, 0.0], [1.0 - r, r, -r]],
            [[q, 1.0, 0.0], d2, lead_tilde, d2],
        ),
        (
            vec![[-(1.0 - r), -r, -r]],
            [pair_late_tilde, pair_late_tilde, lead_tilde, second_tilde],
        ),
        (
            vec![[-(1.0 - r), -r, r], [1.0 - r, r, r]],
            [pair_cross_tilde, pair_cross_tilde, lead_tilde, second_tilde],
        ),
    ];
    raw.into_iter()
        .map(|(faces, entries)| LinearCell {
            faces: faces.into_iter().chain(common).collect(),
            entries: entries.to_vec(),
        })
        .collect()
}

/// All 48 cells in (m, d1, d2) coordinates, valid for rho in [1/2, 1).
pub fn quad_cells(rho: f64) -> Vec<LinearCell<3>> {
    let canonical = canonical_cells(rho);
    let mut out = Vec::with_capacity(48);
    for swap in [false, true] {
        for s1 in [1.0, -1.0] {
            for s2 in [1.0, -1.0] {
                // Rows map (m, d1, d2) to canonical (m, D1, D2).
                let rows: [[f64; 3]; 3] = if swap {
                    [[1.0, 0.0, 0.0], [0.0, 0.0, s2], [0.0, s1, 0.0]]
                } else {
                    [[1.0, 0.0, 0.0], [0.0, s1, 0.0], [0.0, 0.0, s2]]
                };
                let pull = |a: &[f64; 3]| -> [f64; 3] {
                    let mut v = [0.0; 3];
                    for (i, row) in rows.iter().enumerate() {
                        for j in 0..3 {
                            v[j] += a[i] * row[j];
                        }
                    }
                    v
                };
                let signs = [s1, s2];
                let canon_of = |var: usize| -> usize {
                    let b = var % 2;
                    let sigma = if var < 2 { 1.0 } else { -1.0 };
                    let target = if swap { 1 - b } else { b };
                    if sigma * signs[b] > 0.0 {
                        target
                    } else {
                        target + 2
                    }
                };
                for cell in &canonical {
                    out.push(LinearCell {
                        faces: cell.faces.iter().map(pull).collect(),
                        entries: (0..4).map(|v| pull(&cell.entries[canon_of(v)])).collect(),
                    });
                }
            }
        }
    }
    out
}

/// Entry times of (x_j, x_{j+1}, x~_j, x~_{j+1}) from the reparametrized
/// statistics. For rho <= -1/2 the arguments parametrize the statistics with
/// the second and fourth signs flipped, which leaves entry times unchanged.
pub fn quad_degenerate_path(m: f64, d1: f64, d2: f64, rho: f64) -> EntryTimes {
    let cells = quad_cells(rho.abs());
    let h = [m, d1, d2];
    let best = cells
        .iter()
        .max_by(|a, b| a.slack(&h).total_cmp(&b.slack(&h)))
        .expect("cells cover the whole space");
    EntryTimes::new(best.evaluate(&h).into_iter().map(|v| v.max(0.0)).collect())
}

/// Entry times from the raw statistics h = [x_j, x_{j+1}, x~_j, x~_{j+1}]'y.
pub fn quad_entry_times(h: [f64; 4], rho: f64) -> EntryTimes {
    let flip = if rho < 0.0 { -1.0 } else { 1.0 };
    let (h2, h4) = (flip * h[1], flip * h[3]);
    let m = 0.25 * (h[0] + h[2] + h2 + h4);
    quad_degenerate_path(m, 0.5 * (h[0] - h[2]), 0.5 * (h2 - h4), rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;

    #[test]
    fn quad_gram_is_singular() {
        for rho in [0.5, 0.7, -0.6] {
            assert!(min_eigenvalue(&quad_gram(rho)).abs() < 1e-12);
            assert_eq!(is_degenerate_quad_gram(&quad_gram(rho)), Some(rho));
        }
        assert_eq!(is_degenerate_quad_gram(&DMatrix::identity(4, 4)), None);
    }

    #[test]
    fn mean_dominated_row() {
        // d1 > d2 > 0 and m above rho (d1 - d2)/(1 - rho): x_j enters first at m + d1.
        let e = quad_degenerate_path(2.0, 1.0, 0.5, 0.6);
        assert!((e[0] - 3.0).abs() < 1e-12);
        assert!(e.as_slice().iter().all(|&v| v <= 3.0 + 1e-12));
    }

    #[test]
    fn small_mean_row() {
        let (m, d1, d2, rho) = (0.1, 2.0, 0.5, 0.6);
        assert!(m < rho * (d1 - d2) / (1.0 - rho));
        let e = quad_degenerate_path(m, d1, d2, rho);
        assert!((e[0] - (m + d1)).abs() < 1e-12);
        assert!((e[2] - ((rho - 1.0) * m / rho + d1)).abs() < 1e-12);
        assert!((e[1] - d2).abs() < 1e-12);
        assert!((e[3] - d2).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_rows_agree() {
        let (d1, d2, rho) = (1.5, 0.4, 0.55);
        let e = quad_degenerate_path(0.0, d1, d2, rho);
        assert!((e[0] - d1).abs() < 1e-12);
        assert!((e[2] - d1).abs() < 1e-12);
        let above = quad_degenerate_path(1e-13, d1, d2, rho);
        let below = quad_degenerate_path(-1e-13, d1, d2, rho);
        for k in 0..4 {
            assert!((above[k] - below[k]).abs() < 1e-11);
        }
    }
}
