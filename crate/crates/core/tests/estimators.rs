mod common;

use common::{illness_death, max_abs_diff, path, survival};
use condaj::data::{EndReason, Sample};
use condaj::estimators::{aalen_johansen, direct_exposure, nelson_aalen_weighted, product_integral};
use condaj::kernels::{nw_weights, KernelKind, KernelSpec, WeightVector};
use condaj::simulate::oracle::brute_force_estimator;
use condaj::simulate::{default_censoring, default_intensity, simulate_sample};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn epan() -> KernelSpec {
    KernelSpec::uniform_kind(KernelKind::Epanechnikov, 1)
}

/// Largest deviation between the estimators and the literal oracle; also
/// requires identical grids and floor flags.
fn oracle_gap(sample: &Sample, x: f64, a: f64, eps: f64) -> f64 {
    let spec = epan();
    let point = spec.eval_point(vec![x]).unwrap();
    let w = nw_weights(sample, &point, &spec, a);
    let h = nelson_aalen_weighted(sample, &w, eps).unwrap();
    let occ = aalen_johansen(&h, &h.initial);
    let (bh, bocc) = brute_force_estimator(sample, &point, &spec, a, eps);
    assert_eq!(h.times(), bh.times());
    assert_eq!(h.floor_active, bh.floor_active);
    let mut worst = max_abs_diff(&h.initial, &bh.initial);
    for i in 0..h.times().len() {
        worst = worst.max((h.increment(i) - bh.increment(i)).amax());
        worst = worst.max((&h.counts.values[i] - &bh.counts.values[i]).amax());
        for j in 0..h.initial.len() {
            worst = worst.max((h.exposure[j].values[i] - bh.exposure[j].values[i]).abs());
            worst = worst.max((occ.occupation[j].values[i] - bocc.occupation[j].values[i]).abs());
        }
    }
    worst
}

#[test]
fn single_subject_matches_oracle() {
    let s = illness_death(vec![path(0.3, 1, &[(0.4, 2), (1.1, 3)], 1.1, EndReason::Absorbed)]);
    assert_eq!(oracle_gap(&s, 0.3, 0.5, 1e-4), 0.0);
}

#[test]
fn four_subject_survival_matches_oracle() {
    let s = survival(vec![
        path(0.10, 1, &[(0.5, 2)], 0.5, EndReason::Absorbed),
        path(0.35, 1, &[], 1.2, EndReason::Censored),
        path(0.50, 1, &[(1.7, 2)], 1.7, EndReason::Absorbed),
        path(0.80, 1, &[], 2.4, EndReason::Censored),
    ]);
    assert!(oracle_gap(&s, 0.4, 0.6, 1e-4) <= 1e-12);
}

#[test]
fn censoring_ties_match_oracle() {
    let s = illness_death(vec![
        path(0.2, 1, &[(1.0, 2)], 2.0, EndReason::Censored),
        path(0.3, 1, &[], 1.0, EndReason::Censored),
        path(0.4, 1, &[(1.0, 3)], 1.0, EndReason::Absorbed),
        path(0.5, 1, &[(0.5, 2), (2.0, 3)], 2.0, EndReason::Absorbed),
        path(0.6, 1, &[], 2.0, EndReason::Censored),
    ]);
    assert!(oracle_gap(&s, 0.4, 0.5, 1e-4) <= 1e-12);
}

#[test]
fn random_samples_match_oracle_including_floor() {
    for seed in 0..30 {
        let s = simulate_sample(&default_intensity(), &default_censoring(), 8, seed).unwrap();
        let x = s.paths()[0].covariates[0];
        assert!(oracle_gap(&s, x, 0.35, 0.05) <= 1e-12, "seed {seed}");
    }
}

#[test]
fn exposure_identity_on_twenty_paths() {
    let s = simulate_sample(&default_intensity(), &default_censoring(), 20, 42).unwrap();
    let spec = epan();
    let w = nw_weights(&s, &spec.eval_point(vec![0.5]).unwrap(), &spec, 0.6);
    let h = nelson_aalen_weighted(&s, &w, 1e-4).unwrap();
    let direct = direct_exposure(&s, &w, h.times());
    for j in 0..3 {
        assert!(max_abs_diff(&h.exposure[j].values, &direct[j].values) <= 1e-12);
        assert_eq!(h.exposure[j].initial_value, direct[j].initial_value);
    }
}

#[test]
fn aalen_johansen_equals_product_integral() {
    let s = simulate_sample(&default_intensity(), &default_censoring(), 200, 5).unwrap();
    let spec = epan();
    let w = nw_weights(&s, &spec.eval_point(vec![0.4]).unwrap(), &spec, 0.5);
    let h = nelson_aalen_weighted(&s, &w, 1e-4).unwrap();
    let occ = aalen_johansen(&h, &h.initial);
    let p0 = DMatrix::from_row_slice(1, 3, &h.initial);
    for &t in [0.3, 1.0, 2.5, 6.0].iter() {
        let p = &p0 * product_integral(&h.hazard, 0.0, t);
        let expected: Vec<f64> = p.iter().copied().collect();
        assert!(max_abs_diff(&occ.at(t), &expected) <= 1e-12, "t = {t}");
    }
    // Chapman-Kolmogorov
    let split = &p0 * product_integral(&h.hazard, 0.0, 1.0) * product_integral(&h.hazard, 1.0, 3.0);
    let whole = &p0 * product_integral(&h.hazard, 0.0, 3.0);
    assert!((split - whole).amax() <= 1e-12);
}

#[test]
fn uniform_weights_give_ordinary_nelson_aalen() {
    let s = survival(vec![
        path(0.0, 1, &[(1.0, 2)], 1.0, EndReason::Absorbed),
        path(0.0, 1, &[], 1.5, EndReason::Censored),
        path(0.0, 1, &[(2.0, 2)], 2.0, EndReason::Absorbed),
        path(0.0, 1, &[(3.0, 2)], 3.0, EndReason::Absorbed),
    ]);
    let h = nelson_aalen_weighted(&s, &WeightVector::uniform(4), 1e-4).unwrap();
    let expected = [1.0 / 4.0, 1.0 / 4.0, 1.0 / 4.0 + 1.0 / 2.0, 1.0 / 4.0 + 1.0 / 2.0 + 1.0];
    for (i, e) in expected.iter().enumerate() {
        assert!((h.hazard.values[i][(0, 1)] - e).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn off_diagonal_hazards_are_nondecreasing(seed in any::<u64>(), x in 0.0f64..1.0) {
        let s = simulate_sample(&default_intensity(), &default_censoring(), 60, seed).unwrap();
        let spec = epan();
        let w = nw_weights(&s, &spec.eval_point(vec![x]).unwrap(), &spec, 0.5);
        prop_assume!(!w.degenerate);
        let h = nelson_aalen_weighted(&s, &w, 1e-4).unwrap();
        for inc in &h.hazard.increments {
            for j in 0..3 {
                for k in 0..3 {
                    if j != k {
                        prop_assert!(inc[(j, k)] >= 0.0);
                    }
                }
            }
        }
        let occ = aalen_johansen(&h, &h.initial);
        for i in 0..h.times().len() {
            let row = occ.row(i);
            prop_assert!(row.iter().all(|&p| (-1e-12..=1.0 + 1e-12).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn larger_epsilon_never_increases_hazard(seed in any::<u64>(), lo in 1e-6f64..1e-2, factor in 1.0f64..50.0) {
        let s = simulate_sample(&default_intensity(), &default_censoring(), 30, seed).unwrap();
        let spec = epan();
        let w = nw_weights(&s, &spec.eval_point(vec![0.5]).unwrap(), &spec, 0.8);
        let small = nelson_aalen_weighted(&s, &w, lo).unwrap();
        let large = nelson_aalen_weighted(&s, &w, lo * factor).unwrap();
        for (a, b) in small.hazard.values.iter().zip(&large.hazard.values) {
            for j in 0..3 {
                for k in 0..3 {
                    if j != k {
                        prop_assert!(b[(j, k)] <= a[(j, k)]);
                    }
                }
            }
        }
    }
}
