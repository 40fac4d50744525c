mod common;

use common::checks::{
    binomial_p_value, design_families, knockoff_gram_errors, null_sign_balance, Filter, FLAVORS,
};
use fdrlab::design::{DesignKind, DesignSpec};
use fdrlab::mirror_stats::GmPlan;
use fdrlab::seeds::stream;
use fdrlab::tamper::{
    build_knockoffs, degm_augment, gm_augment, knockoff_s, GmAugmentation, KnockoffFlavor,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn gram_identities_hold_for_every_family() {
    for kind in design_families() {
        for flavor in FLAVORS {
            let (self_err, cross_err) = knockoff_gram_errors(kind, 50, flavor, 7);
            assert!(
                self_err < 1e-8 && cross_err < 1e-8,
                "{kind:?} {flavor:?}: {self_err:e} {cross_err:e}"
            );
        }
    }
}

/// Least squares of y on [X without column j, x_plus, x_minus] by SVD;
/// returns the last two coefficients.
fn explicit_mirror_coefficients(
    x: &DMatrix<f64>,
    aug: &GmAugmentation,
    y: &DVector<f64>,
) -> (f64, f64) {
    let p = x.ncols();
    let mut cols: Vec<DVector<f64>> = (0..p)
        .filter(|&k| k != aug.j)
        .map(|k| x.column(k).into_owned())
        .collect();
    cols.push(aug.x_plus.clone());
    cols.push(aug.x_minus.clone());
    let design = DMatrix::from_columns(&cols);
    let coef = design.svd(true, true).solve(y, 1e-14).unwrap();
    (coef[p - 1], coef[p])
}

fn random_response(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = stream(seed);
    DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
}

#[test]
fn mirror_plan_matches_explicit_regression() {
    for kind in [
        DesignKind::Block2 { rho: 0.5 },
        DesignKind::ExpDecay { rho: 0.6 },
        DesignKind::Wishart,
    ] {
        let x = DesignSpec::new(kind, 15, 45, 3).build().unwrap();
        let y = random_response(45, 9);
        let plan = GmPlan::randomized(&x, 21).unwrap();
        let coef = plan.coefficients(&y).unwrap();
        for j in 0..15 {
            let aug = gm_augment(&x, j, 21).unwrap();
            assert!((aug.c - plan.scale()[j]).abs() < 1e-10 * aug.c);
            let (plus, minus) = explicit_mirror_coefficients(x.x(), &aug, &y);
            assert!(
                (plus - coef[j].0).abs() < 1e-9,
                "{kind:?} j {j}: {plus} vs {}",
                coef[j].0
            );
            assert!(
                (minus - coef[j].1).abs() < 1e-9,
                "{kind:?} j {j}: {minus} vs {}",
                coef[j].1
            );
        }
    }
}

#[test]
fn derandomized_mirror_matches_explicit_regression() {
    let x = DesignSpec::new(DesignKind::ExpDecay { rho: 0.5 }, 12, 36, 4)
        .build()
        .unwrap();
    let s = knockoff_s(x.gram().matrix(), KnockoffFlavor::ConditionalIndependence).unwrap();
    let bundle = build_knockoffs(&x, &s, 5).unwrap();
    let y = random_response(36, 10);
    let plan = GmPlan::derandomized(&x, bundle.xtilde()).unwrap();
    let coef = plan.coefficients(&y).unwrap();
    for j in 0..12 {
        let aug = degm_augment(&x, bundle.xtilde(), j).unwrap();
        let (plus, minus) = explicit_mirror_coefficients(x.x(), &aug, &y);
        assert!(
            (plus - coef[j].0).abs() < 1e-9 && (minus - coef[j].1).abs() < 1e-9,
            "j {j}"
        );
    }
}

#[test]
fn null_scores_are_sign_symmetric() {
    let filters = [
        Filter::Knockoff(KnockoffFlavor::Equicorrelated),
        Filter::Knockoff(KnockoffFlavor::ConditionalIndependence),
        Filter::Mirror,
    ];
    for kind in [DesignKind::Orthogonal, DesignKind::Block2 { rho: 0.5 }] {
        for filter in filters {
            let balance = null_sign_balance(filter, kind, 2000, 17);
            assert!(balance.total > 1000, "{filter:?} {kind:?}: {balance:?}");
            assert!(balance.p_value > 0.001, "{filter:?} {kind:?}: {balance:?}");
        }
    }
}

/// On a singular equicorrelated block the path ties a variable with its
/// knockoff with positive probability; without the block the tie set is
/// empty.
#[test]
fn ties_occur_only_on_singular_blocks() {
    let ec = Filter::Knockoff(KnockoffFlavor::Equicorrelated);
    assert!(null_sign_balance(ec, DesignKind::Block2 { rho: 0.5 }, 400, 3).ties > 0);
    assert_eq!(
        null_sign_balance(ec, DesignKind::Block2 { rho: 0.3 }, 400, 3).ties,
        0
    );
    assert_eq!(
        null_sign_balance(Filter::Mirror, DesignKind::Block2 { rho: 0.5 }, 400, 3).ties,
        0
    );
}

#[test]
fn binomial_test_examples() {
    assert_eq!(binomial_p_value(5, 10), 1.0);
    // P(X <= 1) for Bin(10, 1/2) is 11/1024.
    assert!((binomial_p_value(1, 10) - 22.0 / 1024.0).abs() < 1e-12);
    assert!(binomial_p_value(0, 0) == 1.0);
}

proptest! {
    #[test]
    fn binomial_p_value_is_symmetric_and_bounded(total in 1u64..400, frac in 0.0f64..1.0) {
        let k = (frac * total as f64).floor() as u64;
        let a = binomial_p_value(k, total);
        let b = binomial_p_value(total - k, total);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() < 1e-9);
    }
}
