//! Mahalanobis distance from a mean vector to a union of polyhedra.
//!
//! For h ~ N(mu, sigma / (2 log p)) and an open set S, P(h in S) decays as
//! p^{-b} with b the infimum of (x - mu)' sigma^{-1} (x - mu) over S. Every
//! rejection region used here is a finite union of open polyhedra, so b is
//! the smallest exact quadratic-program value over the pieces.

use crate::error::{invalid, Result};

/// Open half-space `normal . x > offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace<const D: usize> {
    pub normal: [f64; D],
    pub offset: f64,
}

impl<const D: usize> HalfSpace<D> {
    pub fn new(normal: [f64; D], offset: f64) -> Self {
        HalfSpace { normal, offset }
    }

    pub fn slack(&self, x: &[f64; D]) -> f64 {
        dot(&self.normal, x) - self.offset
    }

    fn norm(&self) -> f64 {
        dot(&self.normal, &self.normal).sqrt()
    }
}

/// Intersection of open half-spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron<const D: usize> {
    pub faces: Vec<HalfSpace<D>>,
}

impl<const D: usize> Polyhedron<D> {
    pub fn new(faces: Vec<HalfSpace<D>>) -> Self {
        Polyhedron { faces }
    }

    pub fn contains(&self, x: &[f64; D]) -> bool {
        self.faces.iter().all(|f| f.slack(x) > 0.0)
    }

    /// Whether the open polyhedron has a point. Solves
    /// max t s.t. a_i x - |a_i| t >= c_i, t <= 1, |x_k| <= BOX by vertex
    /// enumeration; the pieces used here are cones cut by one level set, so
    /// a nonempty piece always reaches inside the box.
    pub fn is_nonempty(&self) -> bool {
        const BOX: f64 = 1e3;
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for f in &self.faces {
            let n = f.norm();
            if n < 1e-14 {
                if f.offset >= 0.0 {
                    return false;
                }
                continue;
            }
            let mut a: Vec<f64> = f.normal.iter().map(|v| v / n).collect();
            a.push(-1.0);
            rows.push((a, f.offset / n));
        }
        let mut cap = vec![0.0; D + 1];
        cap[D] = -1.0;
        rows.push((cap, -1.0));
        for k in 0..D {
            for sign in [1.0, -1.0] {
                let mut a = vec![0.0; D + 1];
                a[k] = sign;
                rows.push((a, -BOX));
            }
        }
        let dim = D + 1;
        let mut best = f64::NEG_INFINITY;
        for subset in Subsets::new(rows.len(), dim) {
            let a: Vec<f64> = subset.iter().flat_map(|&i| rows[i].0.clone()).collect();
            let c: Vec<f64> = subset.iter().map(|&i| rows[i].1).collect();
            let Some(z) = solve(&a, &c, dim) else {
                continue;
            };
            let feasible = rows.iter().all(|(a, c)| {
                let v: f64 = a.iter().zip(&z).map(|(x, y)| x * y).sum();
                v >= c - 1e-9
            });
            if feasible {
                best = best.max(z[D]);
            }
        }
        best > 1e-9
    }
}

/// Target set of an ellipsoid problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Region<const D: usize> {
    pieces: Vec<Polyhedron<D>>,
}

impl<const D: usize> Region<D> {
    /// Keeps only the pieces with a nonempty interior; lower-dimensional
    /// pieces carry no probability and would understate b.
    pub fn new(pieces: Vec<Polyhedron<D>>) -> Self {
        Region {
            pieces: pieces.into_iter().filter(|p| p.is_nonempty()).collect(),
        }
    }

    pub fn pieces(&self) -> &[Polyhedron<D>] {
        &self.pieces
    }

    pub fn contains(&self, x: &[f64; D]) -> bool {
        self.pieces.iter().any(|p| p.contains(x))
    }
}

/// Smallest Mahalanobis distance from `mu` to `region` in the metric of
/// `sigma`.
#[derive(Debug, Clone)]
pub struct EllipsoidProblem<'a, const D: usize> {
    pub mu: [f64; D],
    pub sigma: [[f64; D]; D],
    pub region: &'a Region<D>,
}

/// Exponent b; `mu_inside` flags that the mean already lies in the closure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidSolution {
    pub b: f64,
    pub mu_inside: bool,
}

const FEAS_TOL: f64 = 1e-10;

/// Exact minimum over each polyhedral piece: for every active face set of
/// size at most D, project mu onto the affine hull in the sigma metric and
/// keep the feasible projections. The true minimizer is one of them.
pub fn ellipsoid_exponent<const D: usize>(
    problem: &EllipsoidProblem<'_, D>,
) -> Result<EllipsoidSolution> {
    let sigma = &problem.sigma;
    for i in 0..D {
        for j in 0..D {
            if (sigma[i][j] - sigma[j][i]).abs() > 1e-12 {
                return Err(invalid("sigma", "covariance must be symmetric"));
            }
        }
        if sigma[i][i] <= 0.0 {
            return Err(invalid("sigma", "covariance must have a positive diagonal"));
        }
    }
    if problem.region.pieces.is_empty() {
        return Ok(EllipsoidSolution {
            b: f64::INFINITY,
            mu_inside: false,
        });
    }
    let mut best = f64::INFINITY;
    for piece in &problem.region.pieces {
        best = best.min(piece_distance(piece, &problem.mu, sigma)?);
        if best == 0.0 {
            break;
        }
    }
    Ok(EllipsoidSolution {
        b: best,
        mu_inside: best == 0.0,
    })
}

fn piece_distance<const D: usize>(
    piece: &Polyhedron<D>,
    mu: &[f64; D],
    sigma: &[[f64; D]; D],
) -> Result<f64> {
    let faces = &piece.faces;
    let feasible = |x: &[f64; D]| {
        faces
            .iter()
            .all(|f| f.slack(x) >= -FEAS_TOL * (1.0 + f.offset.abs()))
    };
    if feasible(mu) {
        return Ok(0.0);
    }
    // sigma * a_i for every face.
    let sa: Vec<[f64; D]> = faces
        .iter()
        .map(|f| {
            let mut v = [0.0; D];
            for (i, row) in sigma.iter().enumerate() {
                v[i] = dot(row, &f.normal);
            }
            v
        })
        .collect();
    let mut best = f64::INFINITY;
    for k in 1..=D.min(faces.len()) {
        for subset in Subsets::new(faces.len(), k) {
            let mut m = vec![0.0; k * k];
            let mut rhs = vec![0.0; k];
            for (r, &i) in subset.iter().enumerate() {
                for (c, &j) in subset.iter().enumerate() {
                    m[r * k + c] = dot(&faces[i].normal, &sa[j]);
                }
                rhs[r] = faces[i].offset - dot(&faces[i].normal, mu);
            }
            let Some(lambda) = solve(&m, &rhs, k) else {
                continue;
            };
            let mut x = *mu;
            for (r, &i) in subset.iter().enumerate() {
                for d in 0..D {
                    x[d] += sa[i][d] * lambda[r];
                }
            }
            if !feasible(&x) {
                continue;
            }
            let value: f64 = rhs.iter().zip(&lambda).map(|(a, b)| a * b).sum();
            best = best.min(value.max(0.0));
        }
    }
    Ok(best)
}

pub(crate) fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting on a row-major k x k system.
/// Returns None when the system is numerically singular.
fn solve(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut v = b.to_vec();
    let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);
    for col in 0..k {
        let piv =
            (col..k).max_by(|&i, &j| m[i * k + col].abs().total_cmp(&m[j * k + col].abs()))?;
        if m[piv * k + col].abs() < 1e-12 * scale {
            return None;
        }
        if piv != col {
            for c in 0..k {
                m.swap(piv * k + c, col * k + c);
            }
            v.swap(piv, col);
        }
        for row in col + 1..k {
            let f = m[row * k + col] / m[col * k + col];
            for c in col..k {
                m[row * k + c] -= f * m[col * k + c];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let s: f64 = (row + 1..k).map(|c| m[row * k + c] * x[c]).sum();
        x[row] = (v[row] - s) / m[row * k + row];
    }
    Some(x)
}

/// k-subsets of 0..n in lexicographic order.
struct Subsets {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Subsets {
    fn new(n: usize, k: usize) -> Self {
        Subsets {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Subsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
