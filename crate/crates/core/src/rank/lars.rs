//! Exact Lasso homotopy (LARS with the Lasso modification), reporting the
//! first lambda at which each variable joins the active set.

use nalgebra::DMatrix;

use super::EntryTimes;
use crate::error::{invalid, Error, Result};

/// Relative zero threshold along the path.
const REL_TOL: f64 = 1e-10;
/// Pivot below which a new active variable counts as linearly dependent.
const SINGULAR_PIVOT: f64 = 1e-9;
const DENOM_EPS: f64 = 1e-12;

/// What to do when a variable would make the active Gram singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegeneratePolicy {
    /// Stop with [`Error::SingularActiveSet`].
    #[default]
    Refuse,
    /// Record the entry time of the dependent variable but keep it out of
    /// the active set; it never moves the fit because it lies in the span of
    /// the active columns.
    RecordTied,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PathOptions {
    pub degenerate: DegeneratePolicy,
}

/// Entry times of every variable along the Lasso path of `(gram, xty)`.
pub fn lasso_entry_times(gram: &DMatrix<f64>, xty: &[f64]) -> Result<EntryTimes> {
    lasso_entry_times_with(gram, xty, PathOptions::default())
}

/// Active set with an incrementally maintained Cholesky factor.
struct Active {
    idx: Vec<usize>,
    signs: Vec<f64>,
    /// Lower-triangular rows; row i has i + 1 entries.
    chol: Vec<Vec<f64>>,
    member: Vec<bool>,
}

impl Active {
    fn new(m: usize) -> Self {
        Active {
            idx: Vec::new(),
            signs: Vec::new(),
            chol: Vec::new(),
            member: vec![false; m],
        }
    }

    fn len(&self) -> usize {
        self.idx.len()
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(b.len());
        for (i, row) in self.chol.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&z).map(|(l, v)| l * v).sum();
            z.push((b[i] - s) / row[i]);
        }
        z
    }

    /// Solve L' d = z, sweeping rows of L so memory is read contiguously.
    fn backward(&self, z: &[f64]) -> Vec<f64> {
        let mut rhs = z.to_vec();
        let mut d = vec![0.0; rhs.len()];
        for i in (0..rhs.len()).rev() {
            let row = &self.chol[i];
            let di = rhs[i] / row[i];
            d[i] = di;
            for (r, l) in rhs[..i].iter_mut().zip(&row[..i]) {
                *r -= l * di;
            }
        }
        d
    }

    /// Try to append `k`; fails without modifying state if `k` is dependent.
    fn push(&mut self, gram: &DMatrix<f64>, k: usize, sign: f64) -> bool {
        let b: Vec<f64> = self.idx.iter().map(|&i| gram[(i, k)]).collect();
        let l = self.forward(&b);
        let pivot = gram[(k, k)] - l.iter().map(|v| v * v).sum::<f64>();
        if pivot <= SINGULAR_PIVOT * gram[(k, k)].max(1.0) {
            return false;
        }
        let mut row = l;
        row.push(pivot.sqrt());
        self.chol.push(row);
        self.idx.push(k);
        self.signs.push(sign);
        self.member[k] = true;
        true
    }

    /// Remove the variable at position `q`, downdating the factor with
    /// Givens rotations instead of refactoring.
    fn remove_at(&mut self, q: usize) {
        let var = self.idx.remove(q);
        self.signs.remove(q);
        self.member[var] = false;
        self.chol.remove(q);
        // Row i (former row i + 1) has one entry past the diagonal; rotate
        // columns (i, i + 1) to clear it.
        for i in q..self.chol.len() {
            let (a, b) = (self.chol[i][i], self.chol[i][i + 1]);
            let r = a.hypot(b);
            let (c, s) = (a / r, b / r);
            for row in self.chol[i..].iter_mut() {
                let (x, y) = (row[i], row[i + 1]);
                row[i] = c * x + s * y;
                row[i + 1] = c * y - s * x;
            }
            self.chol[i].truncate(i + 1);
        }
    }

    fn remove(&mut self, drop: &[usize]) {
        for &var in drop {
            if let Some(q) = self.idx.iter().position(|&i| i == var) {
                self.remove_at(q);
            }
        }
    }

    /// Solve G_AA d = s_A.
    fn direction(&self) -> Vec<f64> {
        self.backward(&self.forward(&self.signs))
    }
}

/// Entry times with an explicit policy for singular active sets.
pub fn lasso_entry_times_with(
    gram: &DMatrix<f64>,
    xty: &[f64],
    opts: PathOptions,
) -> Result<EntryTimes> {
    path_entry_times(gram, xty, opts, None)
}

/// Entry times truncated for pairwise maxima: the path stops once every
/// variable or its partner has entered. A variable whose partner entered
/// first may report 0, so only max(entry_k, entry_partner) and which of the
/// two is larger are exact.
pub fn lasso_pair_entry_times(
    gram: &DMatrix<f64>,
    xty: &[f64],
    opts: PathOptions,
    partner: &[Option<usize>],
) -> Result<EntryTimes> {
    if partner.len() != xty.len() {
        return Err(Error::Dimension(format!(
            "partner map has length {}, xty has length {}",
            partner.len(),
            xty.len()
        )));
    }
    path_entry_times(gram, xty, opts, Some(partner))
}

fn path_entry_times(
    gram: &DMatrix<f64>,
    xty: &[f64],
    opts: PathOptions,
    partner: Option<&[Option<usize>]>,
) -> Result<EntryTimes> {
    let m = xty.len();
    if gram.nrows() != m || gram.ncols() != m {
        return Err(Error::Dimension(format!(
            "Gram is {}x{}, xty has length {m}",
            gram.nrows(),
            gram.ncols()
        )));
    }
    if xty.iter().any(|v| !v.is_finite()) {
        return Err(invalid("xty", "contains a non-finite value"));
    }
    let lam_max = xty.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut entry = vec![0.0; m];
    if lam_max == 0.0 {
        return Ok(EntryTimes(entry));
    }
    let tol = REL_TOL * lam_max;

    let mut active = Active::new(m);
    let mut entered = vec![false; m];
    let mut blocked = vec![false; m];
    let mut beta = vec![0.0; m];
    let mut corr = xty.to_vec();
    let mut lam = lam_max;
    let mut pending: Vec<usize> = (0..m).filter(|&k| xty[k].abs() >= lam_max - tol).collect();
    let mut just_dropped: Vec<usize> = Vec::new();
    let mut n_entered = 0;
    let max_steps = 20 * m + 100;

    for _ in 0..max_steps {
        // Admit everything that reached the boundary at the current lambda.
        pending.sort_by(|&a, &b| corr[b].abs().total_cmp(&corr[a].abs()).then(a.cmp(&b)));
        for &k in &pending {
            if !entered[k] {
                entered[k] = true;
                entry[k] = lam;
                n_entered += 1;
            }
        }
        for k in pending.drain(..) {
            let sign = if corr[k] >= 0.0 { 1.0 } else { -1.0 };
            if !active.push(gram, k, sign) {
                match opts.degenerate {
                    DegeneratePolicy::Refuse => {
                        return Err(Error::SingularActiveSet {
                            lambda: lam,
                            entry_times: entry,
                        })
                    }
                    DegeneratePolicy::RecordTied => blocked[k] = true,
                }
            }
        }
        // Only first entries are reported, so the rest of the path is moot.
        if lam <= tol || n_entered == m {
            break;
        }
        if let Some(partner) = partner {
            let covered = |k: usize| entered[k] || partner[k].is_some_and(|q| entered[q]);
            if (0..m).all(covered) {
                break;
            }
        }

        let free = |k: usize| !active.member[k] && !blocked[k];
        if active.len() == 0 {
            // Nothing active: the fit is zero and the next entry is the
            // largest remaining correlation.
            let top = (0..m)
                .filter(|&k| free(k))
                .map(|k| corr[k].abs())
                .fold(0.0, f64::max);
            if top <= tol {
                break;
            }
            lam = top;
            pending = (0..m)
                .filter(|&k| free(k) && corr[k].abs() >= top - tol)
                .collect();
            just_dropped.clear();
            continue;
        }

        let d = active.direction();
        let mut slope = vec![0.0; m];
        let columns = gram.as_slice();
        for (&i, &di) in active.idx.iter().zip(&d) {
            for (a, g) in slope.iter_mut().zip(&columns[i * m..(i + 1) * m]) {
                *a += di * g;
            }
        }

        // Candidate breakpoints below the current lambda.
        let mut entry_cand = vec![f64::NEG_INFINITY; m];
        for k in (0..m).filter(|&k| free(k) && !just_dropped.contains(&k)) {
            let (c, a) = (corr[k], slope[k]);
            let mut best = f64::NEG_INFINITY;
            if 1.0 - a > DENOM_EPS {
                best = best.max((c - lam * a) / (1.0 - a));
            }
            if 1.0 + a > DENOM_EPS {
                best = best.max((lam * a - c) / (1.0 + a));
            }
            if best <= lam + tol {
                entry_cand[k] = best;
            }
        }
        let mut drop_cand = vec![f64::NEG_INFINITY; active.len()];
        for (pos, (&i, &di)) in active.idx.iter().zip(&d).enumerate() {
            if di != 0.0 {
                let at = lam + beta[i] / di;
                if at < lam - tol {
                    drop_cand[pos] = at;
                }
            }
        }
        let next = entry_cand
            .iter()
            .chain(&drop_cand)
            .copied()
            .fold(0.0_f64, f64::max)
            .min(lam);

        // Move to the breakpoint.
        let step = lam - next;
        for (&i, &di) in active.idx.iter().zip(&d) {
            beta[i] += step * di;
        }
        for (c, a) in corr.iter_mut().zip(&slope) {
            *c -= step * a;
        }
        lam = next;
        for (&i, &s) in active.idx.iter().zip(&active.signs) {
            corr[i] = lam * s;
        }
        if lam <= tol {
            break;
        }

        let drops: Vec<usize> = active
            .idx
            .iter()
            .zip(&drop_cand)
            .filter(|(_, &at)| at >= lam - tol)
            .map(|(&i, _)| i)
            .collect();
        if !drops.is_empty() {
            for &i in &drops {
                beta[i] = 0.0;
            }
            active.remove(&drops);
        }
        just_dropped = drops;
        pending = (0..m).filter(|&k| entry_cand[k] >= lam - tol).collect();
        if next < 0.0 {
            return Err(Error::Invariant(format!("negative breakpoint {next}")));
        }
    }
    Ok(EntryTimes(entry))
}
