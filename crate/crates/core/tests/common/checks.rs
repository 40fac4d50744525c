//! Structural checks reporting worst deviations, so tests and the
//! acceptance harness apply their own thresholds.

use fdrlab::design::{make_gram, DesignKind, DesignSpec};
use fdrlab::mirror_stats::{mirror_pair, symmetric_stat, GmPlan, KnockoffPlan, Ranker, StatKind};
use fdrlab::rank::{bivariate_entry_times, lasso_entry_times, DegeneratePolicy};
use fdrlab::seeds::{derive_seed, stream};
use fdrlab::signal::{draw_response, BetaVector};
use fdrlab::tamper::{build_knockoffs, knockoff_s, KnockoffFlavor};
use fdrlab::theory::{hamming_exponent, phase_curves, variance_profile, Method, MethodSpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

use super::oracle::{theta_grid, ur_grid, RHO_GRID};

pub const FLAVORS: [KnockoffFlavor; 2] = [
    KnockoffFlavor::Equicorrelated,
    KnockoffFlavor::ConditionalIndependence,
];

pub fn design_families() -> Vec<DesignKind> {
    vec![
        DesignKind::Orthogonal,
        DesignKind::Block2 { rho: 0.5 },
        DesignKind::BlockD { d: 5, rho: 0.3 },
        DesignKind::Factor { k: 3 },
        DesignKind::ExpDecay { rho: 0.6 },
        DesignKind::Wishart,
    ]
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// (max |X~'X~ - G|, max |X'X~ - (G - diag s)|) with G recomputed as X'X.
pub fn knockoff_gram_errors(
    kind: DesignKind,
    p: usize,
    flavor: KnockoffFlavor,
    seed: u64,
) -> (f64, f64) {
    let x = DesignSpec::new(kind, p, 3 * p, seed).build().unwrap();
    let s = knockoff_s(x.gram().matrix(), flavor).unwrap();
    let bundle = build_knockoffs(&x, &s, seed ^ 0xA5A5).unwrap();
    let (xm, xt) = (x.x(), bundle.xtilde());
    let gram = xm.tr_mul(xm);
    let mut cross = gram.clone();
    for (j, v) in s.s.iter().enumerate() {
        cross[(j, j)] -= v;
    }
    (
        max_abs(&(xt.tr_mul(xt) - &gram)),
        max_abs(&(xm.tr_mul(xt) - cross)),
    )
}

/// Two-variable homotopy against the closed-form entry times.
pub fn bivariate_path_deviation(instances: usize, seed: u64) -> f64 {
    let mut rng = stream(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let rho = rng.random_range(-0.9..0.9);
        let h1 = rng.random_range(-4.0..4.0);
        let h2 = rng.random_range(-4.0..4.0);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let path = lasso_entry_times(&g, &[h1, h2]).unwrap();
        let (a, b) = bivariate_entry_times(h1, h2, rho);
        worst = worst.max((path[0] - a).abs()).max((path[1] - b).abs());
    }
    worst
}

/// Full-dimension homotopy on block-diagonal designs against the
/// per-block closed form.
pub fn block2_path_deviation(instances: usize, seed: u64) -> f64 {
    let mut rng = stream(seed);
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let rho = rng.random_range(-0.9..0.9);
        let p = 2 * rng.random_range(2..15) + (inst % 2);
        let gram = make_gram(&DesignSpec::new(DesignKind::Block2 { rho }, p, p, 0)).unwrap();
        let xty: Vec<f64> = (0..p).map(|_| rng.random_range(-4.0..4.0)).collect();
        let full = lasso_entry_times(gram.matrix(), &xty).unwrap();
        for b in (0..p - 1).step_by(2) {
            let (a, c) = bivariate_entry_times(xty[b], xty[b + 1], rho);
            worst = worst.max((full[b] - a).abs()).max((full[b + 1] - c).abs());
        }
        if p % 2 == 1 {
            worst = worst.max((full[p - 1] - xty[p - 1].abs()).abs());
        }
    }
    worst
}

/// Largest gap between the Hamming exponents of two methods on the grid.
pub fn hamming_gap(first: &MethodSpec, second: &MethodSpec) -> f64 {
    let grid = ur_grid();
    let mut worst: f64 = 0.0;
    for &u in &grid {
        for &r in &grid {
            for theta in theta_grid() {
                let a = hamming_exponent(first, theta, r, u).unwrap();
                let b = hamming_exponent(second, theta, r, u).unwrap();
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

/// CI knockoff with the Lasso path against the Lasso-path prototype, over
/// the block correlation grid.
pub fn ci_knockoff_vs_lasso_gap() -> f64 {
    RHO_GRID
        .iter()
        .map(|&rho| {
            hamming_gap(
                &MethodSpec::block2(Method::KnockoffCi, rho).unwrap(),
                &MethodSpec::block2(Method::LassopathPrototype, rho).unwrap(),
            )
        })
        .fold(0.0, f64::max)
}

/// Orthogonal signed-max knockoff with a = 0 against the marginal
/// statistic: Hamming exponents and both phase curves.
pub fn orthogonal_knockoff_vs_marginal_gap() -> f64 {
    let kf = MethodSpec::orthogonal(Method::KnockoffSgm, 0.0).unwrap();
    let bh = MethodSpec::orthogonal(Method::BhMarginal, 0.0).unwrap();
    let curves = phase_curves(&kf)
        .unwrap()
        .points
        .iter()
        .zip(&phase_curves(&bh).unwrap().points)
        .map(|(k, b)| (k.h_ar - b.h_ar).abs().max((k.h_er - b.h_er).abs()))
        .fold(0.0, f64::max);
    curves.max(hamming_gap(&kf, &bh))
}

/// (max |sigma1 - omega|, max |sigma2|) for CI knockoffs on block designs.
pub fn ci_block2_variance_deviation(rhos: &[f64], p: usize) -> (f64, f64) {
    let mut worst = (0.0_f64, 0.0_f64);
    for &rho in rhos {
        let gram = make_gram(&DesignSpec::new(DesignKind::Block2 { rho }, p, 3 * p, 0)).unwrap();
        let s = knockoff_s(gram.matrix(), KnockoffFlavor::ConditionalIndependence).unwrap();
        let prof = variance_profile(gram.matrix(), &s.s).unwrap();
        for j in 0..p {
            worst.0 = worst.0.max((prof.sigma1[j] - prof.omega[j]).abs());
            worst.1 = worst.1.max(prof.sigma2[j].abs());
        }
    }
    worst
}

/// Largest violation of omega <= sigma1 <= omega1 over random Wishart
/// designs. The equicorrelated s is shrunk by 0.9 because at full size
/// 2G - diag(s) is singular and omega1 is undefined.
pub fn wishart_ordering_violation(count: u64, p: usize, n: usize) -> f64 {
    (0..count)
        .map(|seed| {
            let gram = make_gram(&DesignSpec::new(DesignKind::Wishart, p, n, seed)).unwrap();
            let s: Vec<f64> = knockoff_s(gram.matrix(), KnockoffFlavor::Equicorrelated)
                .unwrap()
                .s
                .iter()
                .map(|v| 0.9 * v)
                .collect();
            variance_profile(gram.matrix(), &s)
                .unwrap()
                .ordering_violation()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub enum Filter {
    Knockoff(KnockoffFlavor),
    Mirror,
}

#[derive(Debug, Clone, Copy)]
pub struct SignBalance {
    pub positive: u64,
    /// Untied draws with a nonzero score.
    pub total: u64,
    /// Draws where the two importances were exactly equal.
    pub ties: u64,
    pub p_value: f64,
}

/// Two-sided exact binomial test of P(positive) = 1/2.
pub fn binomial_p_value(positive: u64, total: u64) -> f64 {
    if total == 0 {
        return 1.0;
    }
    let dist = Binomial::new(0.5, total).unwrap();
    let lower = dist.cdf(positive);
    let upper = if positive == 0 {
        1.0
    } else {
        1.0 - dist.cdf(positive - 1)
    };
    (2.0 * lower.min(upper)).min(1.0)
}

const SIGNAL_INDICES: [usize; 4] = [1, 5, 9, 13];

/// Signs of null signed-max scores over repeated noise draws with X fixed.
/// Each replication contributes one null variable, cycling over all nulls,
/// so the draws are independent. Exact ties Z = Z~ are set aside: the
/// signed maximum sends them to the negative side, and they have positive
/// probability only on singular equicorrelated blocks.
pub fn null_sign_balance(filter: Filter, kind: DesignKind, reps: u64, seed: u64) -> SignBalance {
    let p = 20;
    let x = DesignSpec::new(kind, p, 3 * p, seed).build().unwrap();
    let mut beta = vec![0.0; p];
    for &j in &SIGNAL_INDICES {
        beta[j] = 3.0;
    }
    let beta = BetaVector::from_vec(beta);
    let nulls: Vec<usize> = (0..p).filter(|j| !SIGNAL_INDICES.contains(j)).collect();
    let pairs_fn: Box<dyn Fn(&DVector<f64>) -> Vec<(f64, f64)>> = match filter {
        Filter::Knockoff(flavor) => {
            let s = knockoff_s(x.gram().matrix(), flavor).unwrap();
            let bundle = build_knockoffs(&x, &s, derive_seed(seed, &[1])).unwrap();
            let plan = KnockoffPlan::new(&bundle, Ranker::LassoPath, DegeneratePolicy::RecordTied)
                .unwrap();
            Box::new(move |y| plan.pairs_from_xty(&plan.statistics(y).unwrap()).unwrap())
        }
        Filter::Mirror => {
            let plan = GmPlan::randomized(&x, derive_seed(seed, &[2])).unwrap();
            Box::new(move |y| {
                plan.coefficients(y)
                    .unwrap()
                    .into_iter()
                    .map(|(plus, minus)| mirror_pair(plus, minus))
                    .collect()
            })
        }
    };
    let (mut positive, mut total, mut ties) = (0, 0, 0);
    for rep in 0..reps {
        let y = draw_response(&x, &beta, derive_seed(seed, &[3, rep]))
            .unwrap()
            .y;
        let (z, zt) = pairs_fn(&y)[nulls[rep as usize % nulls.len()]];
        if z == zt {
            ties += 1;
            continue;
        }
        total += 1;
        positive += u64::from(symmetric_stat(z, zt, StatKind::SignedMax) > 0.0);
    }
    SignBalance {
        positive,
        total,
        ties,
        p_value: binomial_p_value(positive, total),
    }
}
