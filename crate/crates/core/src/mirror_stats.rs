//! Symmetric statistics, knockoff and Gaussian-mirror scores, data-driven
//! thresholds and error bookkeeping.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::rank::{DegeneratePolicy, PathPlan};
use crate::signal::BetaVector;
use crate::tamper::{augmented_gram, gm_direction, KnockoffBundle};

/// Antisymmetric combiner of an importance pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    SignedMax,
    Difference,
}

impl StatKind {
    pub fn label(&self) -> &'static str {
        match self {
            StatKind::SignedMax => "sgm",
            StatKind::Difference => "dif",
        }
    }
}

/// Ranking algorithm applied to the tampered design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranker {
    LassoPath,
    LeastSquares,
}

/// max(z, zt) signed by which of the two is larger; a tie counts as negative.
pub fn signed_max(z: f64, zt: f64) -> Result<f64> {
    if z < 0.0 || zt < 0.0 {
        return Err(invalid(
            "z",
            format!("signed maximum needs nonnegative inputs, got ({z}, {zt})"),
        ));
    }
    Ok(signed_max_unchecked(z, zt))
}

fn signed_max_unchecked(z: f64, zt: f64) -> f64 {
    if z > zt {
        z
    } else {
        -zt
    }
}

pub fn difference(z: f64, zt: f64) -> f64 {
    z - zt
}

/// Combine a nonnegative importance pair.
pub fn symmetric_stat(z: f64, zt: f64, kind: StatKind) -> f64 {
    match kind {
        StatKind::SignedMax => signed_max_unchecked(z, zt),
        StatKind::Difference => difference(z, zt),
    }
}

/// Mirror statistic of the two mirror coefficients.
pub fn mirror_stat(b_plus: f64, b_minus: f64, kind: StatKind) -> f64 {
    match kind {
        StatKind::Difference => (b_plus + b_minus).abs() - (b_plus - b_minus).abs(),
        StatKind::SignedMax => {
            let (z, zt) = mirror_pair(b_plus, b_minus);
            signed_max_unchecked(z, zt)
        }
    }
}

/// Mirror coefficients as an importance pair: the statistic of the pair
/// (|b+ + b-|, |b+ - b-|) equals the mirror statistic of (b+, b-).
pub fn mirror_pair(b_plus: f64, b_minus: f64) -> (f64, f64) {
    ((b_plus + b_minus).abs(), (b_plus - b_minus).abs())
}

/// Signed importance scores with the pairs they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    /// (Z_j, Z~_j) for each variable.
    pub pairs: Vec<(f64, f64)>,
    pub kind: StatKind,
    pub method_tag: String,
}

impl ScoreVector {
    pub fn from_pairs(
        pairs: Vec<(f64, f64)>,
        kind: StatKind,
        method_tag: impl Into<String>,
    ) -> Self {
        ScoreVector {
            scores: pairs
                .iter()
                .map(|&(z, zt)| symmetric_stat(z, zt, kind))
                .collect(),
            pairs,
            kind,
            method_tag: method_tag.into(),
        }
    }

    /// Scores recomputed with every pair swapped.
    pub fn swapped(&self) -> ScoreVector {
        let pairs = self.pairs.iter().map(|&(z, zt)| (zt, z)).collect();
        ScoreVector::from_pairs(pairs, self.kind, self.method_tag.clone())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Precomputed knockoff scoring for one bundle.
#[derive(Debug, Clone)]
pub struct KnockoffPlan {
    p: usize,
    x: DMatrix<f64>,
    xtilde: DMatrix<f64>,
    solver: KnockoffSolver,
}

#[derive(Debug, Clone)]
enum KnockoffSolver {
    Path(PathPlan),
    LeastSquares(Cholesky<f64, Dyn>),
}

impl KnockoffPlan {
    pub fn new(bundle: &KnockoffBundle, ranker: Ranker, policy: DegeneratePolicy) -> Result<Self> {
        let gram = augmented_gram(bundle.x().gram().matrix(), &bundle.s().s);
        let solver = match ranker {
            Ranker::LassoPath => KnockoffSolver::Path(PathPlan::new(&gram, policy)),
            Ranker::LeastSquares => KnockoffSolver::LeastSquares(
                Cholesky::new(gram.clone())
                    .ok_or_else(|| Error::Singular("augmented knockoff Gram is singular".into()))?,
            ),
        };
        Ok(KnockoffPlan {
            p: bundle.x().p(),
            x: bundle.x().x().clone(),
            xtilde: bundle.xtilde().clone(),
            solver,
        })
    }

    /// Importance pairs from the statistics [X, X~]'y.
    pub fn pairs_from_xty(&self, xty: &[f64]) -> Result<Vec<(f64, f64)>> {
        let p = self.p;
        if xty.len() != 2 * p {
            return Err(Error::Dimension(format!(
                "expected {} statistics, got {}",
                2 * p,
                xty.len()
            )));
        }
        let values: Vec<f64> = match &self.solver {
            KnockoffSolver::Path(plan) => plan.entry_times(xty)?.into_vec(),
            KnockoffSolver::LeastSquares(chol) => chol
                .solve(&DVector::from_column_slice(xty))
                .iter()
                .map(|b| b.abs())
                .collect(),
        };
        Ok((0..p).map(|j| (values[j], values[j + p])).collect())
    }

    pub fn statistics(&self, y: &DVector<f64>) -> Result<Vec<f64>> {
        if y.len() != self.x.nrows() {
            return Err(Error::Dimension(format!(
                "response has length {}, design has {} rows",
                y.len(),
                self.x.nrows()
            )));
        }
        let mut xty = self.x.tr_mul(y).as_slice().to_vec();
        xty.extend_from_slice(self.xtilde.tr_mul(y).as_slice());
        Ok(xty)
    }

    pub fn scores(&self, y: &DVector<f64>, kind: StatKind, tag: &str) -> Result<ScoreVector> {
        let pairs = self.pairs_from_xty(&self.statistics(y)?)?;
        Ok(ScoreVector::from_pairs(pairs, kind, tag))
    }

    /// Scores without the importance pairs. The signed maximum only needs
    /// the first entry of each pair, so the Lasso path stops early.
    pub fn score_values(&self, y: &DVector<f64>, kind: StatKind) -> Result<Vec<f64>> {
        let xty = self.statistics(y)?;
        match (&self.solver, kind) {
            (KnockoffSolver::Path(plan), StatKind::SignedMax) => {
                let e = plan.pair_entry_times(&xty, self.p)?.into_vec();
                Ok((0..self.p)
                    .map(|j| symmetric_stat(e[j], e[j + self.p], kind))
                    .collect())
            }
            _ => Ok(self
                .pairs_from_xty(&xty)?
                .into_iter()
                .map(|(z, zt)| symmetric_stat(z, zt, kind))
                .collect()),
        }
    }
}

/// Knockoff scores for one response.
pub fn knockoff_scores(
    bundle: &KnockoffBundle,
    y: &DVector<f64>,
    ranker: Ranker,
    kind: StatKind,
) -> Result<ScoreVector> {
    let tag = format!(
        "knockoff-{}-{}-{}",
        bundle.s().flavor.label(),
        match ranker {
            Ranker::LassoPath => "lasso-path",
            Ranker::LeastSquares => "least-squares",
        },
        kind.label()
    );
    KnockoffPlan::new(bundle, ranker, DegeneratePolicy::Refuse)?.scores(y, kind, &tag)
}

/// Precomputed Gaussian-mirror scoring: regression of y on [X, z_j] for every
/// j reduces, by partialling out X, to a few inner products per variable.
#[derive(Debug, Clone)]
pub struct GmPlan {
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    ginv: DMatrix<f64>,
    /// Column j holds G^-1 X'z_j.
    w: DMatrix<f64>,
    /// Squared norm of z_j after projecting out all of X.
    resid: Vec<f64>,
    scale: Vec<f64>,
    derandomized: bool,
}

impl GmPlan {
    /// Random directions z_j drawn per variable from `seed`.
    pub fn randomized(x: &DesignMatrix, seed: u64) -> Result<Self> {
        if x.n() < x.p() + 1 {
            return Err(invalid(
                "n",
                format!("need n >= p + 1 = {}, got {}", x.p() + 1, x.n()),
            ));
        }
        let mut z = DMatrix::zeros(x.n(), x.p());
        for j in 0..x.p() {
            z.set_column(j, &gm_direction(x.n(), seed, j));
        }
        Self::build(x, z, false)
    }

    /// Mirror columns x_j +/- x~_j from a knockoff matrix.
    pub fn derandomized(x: &DesignMatrix, xtilde: &DMatrix<f64>) -> Result<Self> {
        if xtilde.shape() != x.x().shape() {
            return Err(Error::Dimension(
                "knockoff matrix shape differs from the design".into(),
            ));
        }
        Self::build(x, xtilde.clone(), true)
    }

    fn build(x: &DesignMatrix, z: DMatrix<f64>, derandomized: bool) -> Result<Self> {
        let p = x.p();
        let ginv = linalg::spd_inverse(x.gram().matrix())?;
        let v = x.x().tr_mul(&z);
        let w = &ginv * &v;
        let mut resid = Vec::with_capacity(p);
        let mut scale = Vec::with_capacity(p);
        for j in 0..p {
            let zz = z.column(j).norm_squared();
            let e = zz - v.column(j).dot(&w.column(j));
            if e <= 1e-12 * zz.max(1.0) {
                return Err(Error::Singular(format!(
                    "mirror direction {j} lies in the column span"
                )));
            }
            let omega = ginv[(j, j)];
            // Residual norms after projecting out X without column j.
            let rz2 = e + w[(j, j)] * w[(j, j)] / omega;
            let rx2 = 1.0 / omega;
            resid.push(e);
            scale.push(if derandomized {
                1.0
            } else {
                (rx2 / rz2).sqrt()
            });
        }
        Ok(GmPlan {
            x: x.x().clone(),
            z,
            ginv,
            w,
            resid,
            scale,
            derandomized,
        })
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn is_derandomized(&self) -> bool {
        self.derandomized
    }

    /// Mirror coefficients (b+_j, b-_j) for every j.
    pub fn coefficients(&self, y: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
        if y.len() != self.x.nrows() {
            return Err(Error::Dimension(format!(
                "response has length {}, design has {} rows",
                y.len(),
                self.x.nrows()
            )));
        }
        let xty = self.x.tr_mul(y);
        let zty = self.z.tr_mul(y);
        Ok(self.coefficients_from(&xty, &zty))
    }

    /// Same as [`GmPlan::coefficients`] from precomputed X'y and Z'y.
    pub fn coefficients_from(&self, xty: &DVector<f64>, zty: &DVector<f64>) -> Vec<(f64, f64)> {
        let ols = &self.ginv * xty;
        let cross = self.w.tr_mul(xty);
        (0..ols.len())
            .map(|j| {
                let gamma = (zty[j] - cross[j]) / self.resid[j];
                let a = ols[j] - gamma * self.w[(j, j)];
                let b = gamma / self.scale[j];
                (0.5 * (a + b), 0.5 * (a - b))
            })
            .collect()
    }

    pub fn scores(&self, y: &DVector<f64>, kind: StatKind, tag: &str) -> Result<ScoreVector> {
        Ok(mirror_scores(&self.coefficients(y)?, kind, tag))
    }
}

/// Build a score vector from mirror coefficients.
pub fn mirror_scores(coef: &[(f64, f64)], kind: StatKind, tag: &str) -> ScoreVector {
    ScoreVector {
        scores: coef.iter().map(|&(a, b)| mirror_stat(a, b, kind)).collect(),
        pairs: coef.iter().map(|&(a, b)| mirror_pair(a, b)).collect(),
        kind,
        method_tag: tag.into(),
    }
}

/// Gaussian-mirror scores with directions drawn from `seed`.
pub fn gm_scores(
    x: &DesignMatrix,
    y: &DVector<f64>,
    kind: StatKind,
    seed: u64,
) -> Result<ScoreVector> {
    GmPlan::randomized(x, seed)?.scores(y, kind, &format!("gm-{}", kind.label()))
}

/// De-randomized Gaussian-mirror scores using knockoff columns.
pub fn degm_scores(
    x: &DesignMatrix,
    xtilde: &DMatrix<f64>,
    y: &DVector<f64>,
    kind: StatKind,
) -> Result<ScoreVector> {
    GmPlan::derandomized(x, xtilde)?.scores(y, kind, &format!("degm-{}", kind.label()))
}

/// Rule that produced a selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SelectionMode {
    FdrQ { q: f64 },
    FixedU { u: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    /// Threshold T; infinite when no threshold qualifies.
    pub threshold: f64,
    pub mode: SelectionMode,
}

/// Smallest observed |score| t with #{score < -t} / max(#{score > t}, 1) <= q;
/// variables with score >= t are selected.
pub fn select_scores_at_fdr(scores: &[f64], q: f64) -> Result<SelectionResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid("q", format!("must lie in (0, 1), got {q}")));
    }
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = scores
        .iter()
        .filter(|s| **s != 0.0)
        .map(|s| s.abs())
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let count_below = |t: f64| sorted.partition_point(|&s| s < -t);
    let count_above = |t: f64| sorted.len() - sorted.partition_point(|&s| s <= t);
    let threshold = candidates
        .into_iter()
        .find(|&t| count_below(t) as f64 / count_above(t).max(1) as f64 <= q)
        .unwrap_or(f64::INFINITY);
    let selected = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| threshold.is_finite() && **s >= threshold)
        .map(|(j, _)| j)
        .collect();
    Ok(SelectionResult {
        selected,
        threshold,
        mode: SelectionMode::FdrQ { q },
    })
}

pub fn select_at_fdr(scores: &ScoreVector, q: f64) -> Result<SelectionResult> {
    select_scores_at_fdr(&scores.scores, q)
}

/// Select scores above sqrt(2 u log p).
pub fn select_scores_at_u(scores: &[f64], u: f64, p: usize) -> Result<SelectionResult> {
    if !(u >= 0.0) || p < 2 {
        return Err(invalid(
            "u",
            format!("need u >= 0 and p >= 2, got u = {u}, p = {p}"),
        ));
    }
    let threshold = (2.0 * u * (p as f64).ln()).sqrt();
    let selected = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > threshold)
        .map(|(j, _)| j)
        .collect();
    Ok(SelectionResult {
        selected,
        threshold,
        mode: SelectionMode::FixedU { u },
    })
}

pub fn select_at_u(scores: &ScoreVector, u: f64, p: usize) -> Result<SelectionResult> {
    select_scores_at_u(&scores.scores, u, p)
}

/// Error counts of a selection against the true support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp: usize,
}

impl ErrorCounts {
    pub fn hamming(&self) -> usize {
        self.fp + self.fn_
    }

    pub fn fdp(&self) -> f64 {
        self.fp as f64 / (self.fp + self.tp).max(1) as f64
    }

    pub fn tpr(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_).max(1) as f64
    }
}

pub fn evaluate(selection: &SelectionResult, beta: &BetaVector) -> ErrorCounts {
    evaluate_indices(&selection.selected, beta)
}

pub fn evaluate_indices(selected: &[usize], beta: &BetaVector) -> ErrorCounts {
    let mut chosen = vec![false; beta.len()];
    for &j in selected {
        chosen[j] = true;
    }
    let mut counts = ErrorCounts::default();
    let mut in_support = vec![false; beta.len()];
    for &j in beta.support() {
        in_support[j] = true;
    }
    for j in 0..beta.len() {
        match (chosen[j], in_support[j]) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => {}
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_max_examples() {
        assert_eq!(signed_max(2.0, 1.0).unwrap(), 2.0);
        assert_eq!(signed_max(1.0, 2.0).unwrap(), -2.0);
        assert_eq!(signed_max(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(signed_max(1.5, 1.5).unwrap(), -1.5);
        assert!(signed_max(-1.0, 0.0).is_err());
    }

    #[test]
    fn difference_examples() {
        assert_eq!(difference(2.0, 1.0), 1.0);
        assert_eq!(difference(0.7, 0.7), 0.0);
    }

    #[test]
    fn mirror_stat_examples() {
        assert_eq!(mirror_stat(3.0, 1.0, StatKind::Difference), 2.0);
        assert_eq!(mirror_stat(3.0, 1.0, StatKind::SignedMax), 4.0);
        assert_eq!(mirror_stat(2.0, -2.0, StatKind::Difference), -4.0);
        assert_eq!(mirror_stat(2.0, -2.0, StatKind::SignedMax), -4.0);
    }

    #[test]
    fn mirror_pair_reproduces_mirror_stat() {
        for &(a, b) in &[(3.0, 1.0), (2.0, -2.0), (-0.5, -1.5), (0.2, -0.9)] {
            let (z, zt) = mirror_pair(a, b);
            for kind in [StatKind::SignedMax, StatKind::Difference] {
                assert!((symmetric_stat(z, zt, kind) - mirror_stat(a, b, kind)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fdr_threshold_examples() {
        let sel = select_scores_at_fdr(&[2.0, 1.5, -0.5, 0.3, -1.0], 0.5).unwrap();
        assert_eq!(sel.threshold, 0.5);
        assert_eq!(sel.selected, vec![0, 1]);

        let none = select_scores_at_fdr(&[-1.0, -2.0, -0.5], 0.2).unwrap();
        assert!(none.selected.is_empty());

        let all = select_scores_at_fdr(&[3.0, 2.0, 1.0], 0.1).unwrap();
        assert_eq!(all.threshold, 1.0);
        assert_eq!(all.selected, vec![0, 1, 2]);
    }

    #[test]
    fn fixed_u_selection() {
        let sel = select_scores_at_u(&[0.5, -0.1, 0.0, 2.0], 0.0, 10).unwrap();
        assert_eq!(sel.selected, vec![0, 3]);
    }

    #[test]
    fn error_counts() {
        let beta = BetaVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        let exact = evaluate_indices(&[0, 2], &beta);
        assert_eq!((exact.fp, exact.fn_, exact.tp), (0, 0, 2));
        let mixed = evaluate_indices(&[0, 1], &beta);
        assert_eq!((mixed.fp, mixed.fn_, mixed.tp), (1, 1, 1));
        assert_eq!(mixed.hamming(), 2);
        assert_eq!(mixed.fdp(), 0.5);
        assert_eq!(mixed.tpr(), 0.5);
    }
}
