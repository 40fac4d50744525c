//! Reusable Lasso-path solver for a fixed Gram matrix. The Gram matrix is
//! split into connected components of its sparsity pattern, on which the
//! Lasso objective separates; each component is solved on its own.

use nalgebra::DMatrix;

use super::lars::{lasso_entry_times_with, lasso_pair_entry_times, DegeneratePolicy, PathOptions};
use super::quad::{is_degenerate_quad_gram, quad_entry_times};
use super::EntryTimes;
use crate::error::{Error, Result};

const COUPLING_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Solver {
    Single,
    Quad { rho: f64 },
    Path { gram: DMatrix<f64> },
}

#[derive(Debug, Clone)]
struct Component {
    idx: Vec<usize>,
    solver: Solver,
}

/// Precomputed decomposition of a Gram matrix for repeated path solves.
#[derive(Debug, Clone)]
pub struct PathPlan {
    dim: usize,
    components: Vec<Component>,
    policy: DegeneratePolicy,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl PathPlan {
    /// Split `gram` into independent components. Singular 4x4 components of
    /// equicorrelated knockoff blocks go to the closed-form path; everything
    /// else runs the homotopy under `policy`.
    pub fn new(gram: &DMatrix<f64>, policy: DegeneratePolicy) -> Self {
        let m = gram.nrows();
        let mut parent: Vec<usize> = (0..m).collect();
        for j in 0..m {
            for i in 0..j {
                if gram[(i, j)].abs() > COUPLING_TOL {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); m];
        for i in 0..m {
            let root = find(&mut parent, i);
            groups[root].push(i);
        }
        let components = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|idx| {
                let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| gram[(idx[a], idx[b])]);
                let solver = if idx.len() == 1 {
                    Solver::Single
                } else if let Some(rho) = is_degenerate_quad_gram(&sub) {
                    Solver::Quad { rho }
                } else {
                    Solver::Path { gram: sub }
                };
                Component { idx, solver }
            })
            .collect();
        PathPlan {
            dim: m,
            components,
            policy,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of components handled by the closed-form four-variable path.
    pub fn degenerate_blocks(&self) -> usize {
        self.components
            .iter()
            .filter(|c| matches!(c.solver, Solver::Quad { .. }))
            .count()
    }

    pub fn entry_times(&self, xty: &[f64]) -> Result<EntryTimes> {
        self.solve(xty, None)
    }

    /// Entry times for pairwise maxima of variables j and j + `pairs`
    /// (knockoff pairs); see [`super::lasso_pair_entry_times`]. Only
    /// max(entry_j, entry_{j+pairs}) and the sign of their difference are
    /// exact.
    pub fn pair_entry_times(&self, xty: &[f64], pairs: usize) -> Result<EntryTimes> {
        if 2 * pairs != self.dim {
            return Err(Error::Dimension(format!(
                "plan has dimension {}, expected twice {pairs}",
                self.dim
            )));
        }
        self.solve(xty, Some(pairs))
    }

    fn solve(&self, xty: &[f64], pairs: Option<usize>) -> Result<EntryTimes> {
        if xty.len() != self.dim {
            return Err(Error::Dimension(format!(
                "plan has dimension {}, xty has length {}",
                self.dim,
                xty.len()
            )));
        }
        let mut out = vec![0.0; self.dim];
        let opts = PathOptions {
            degenerate: self.policy,
        };
        for comp in &self.components {
            match &comp.solver {
                Solver::Single => out[comp.idx[0]] = xty[comp.idx[0]].abs(),
                Solver::Quad { rho } => {
                    let h = [
                        xty[comp.idx[0]],
                        xty[comp.idx[1]],
                        xty[comp.idx[2]],
                        xty[comp.idx[3]],
                    ];
                    let e = quad_entry_times(h, *rho);
                    for (k, &i) in comp.idx.iter().enumerate() {
                        out[i] = e[k];
                    }
                }
                Solver::Path { gram } => {
                    let local: Vec<f64> = comp.idx.iter().map(|&i| xty[i]).collect();
                    let solved = match pairs {
                        None => lasso_entry_times_with(gram, &local, opts),
                        Some(half) => {
                            let partner: Vec<Option<usize>> = comp
                                .idx
                                .iter()
                                .map(|&i| {
                                    let mate = if i < half { i + half } else { i - half };
                                    comp.idx.iter().position(|&k| k == mate)
                                })
                                .collect();
                            lasso_pair_entry_times(gram, &local, opts, &partner)
                        }
                    };
                    let e = solved.map_err(|err| match err {
                        Error::SingularActiveSet {
                            lambda,
                            entry_times,
                        } => {
                            let mut partial = out.clone();
                            for (k, &i) in comp.idx.iter().enumerate() {
                                partial[i] = entry_times[k];
                            }
                            Error::SingularActiveSet {
                                lambda,
                                entry_times: partial,
                            }
                        }
                        other => other,
                    })?;
                    for (k, &i) in comp.idx.iter().enumerate() {
                        out[i] = e[k];
                    }
                }
            }
        }
        Ok(EntryTimes::new(out))
    }
}
