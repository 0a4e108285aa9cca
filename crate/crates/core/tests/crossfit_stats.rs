use ivw_cate::crossfit::{assign_folds, cross_fit_nuisances, SplitScheme};
use ivw_cate::gbt::GbtConfig;
use ivw_cate::sim::{generate_dataset, Dataset, SimSetting};
use proptest::prelude::*;

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn constant_propensity_is_recovered_on_average() {
    let data = generate_dataset(SimSetting::B, 4000, 21).unwrap();
    let folds = assign_folds(data.len(), 10, 1).unwrap();
    let fit = cross_fit_nuisances(&data, &folds, SplitScheme::TwoWay, &GbtConfig::default(), 2).unwrap();
    let mean = fit.pi_hat.iter().sum::<f64>() / fit.len() as f64;
    assert!((mean - 0.5).abs() < 0.05, "mean pi_hat {mean}");
}

#[test]
fn propensity_tracks_covariate_in_setting_f() {
    let data = generate_dataset(SimSetting::F, 4000, 22).unwrap();
    let folds = assign_folds(data.len(), 10, 3).unwrap();
    let fit = cross_fit_nuisances(&data, &folds, SplitScheme::TwoWay, &GbtConfig::default(), 4).unwrap();
    let x: Vec<f64> = data.x.column(0).to_vec();
    let rho = spearman(&fit.pi_hat, &x);
    assert!(rho > 0.8, "rank correlation {rho}");
}

fn small_gbt() -> GbtConfig {
    GbtConfig {
        num_trees: 15,
        min_samples_leaf: 5,
        ..GbtConfig::default()
    }
}

fn perturb_fold(data: &Dataset, fold_of: &[usize], fold: usize) -> Dataset {
    let mut out = data.clone();
    for i in 0..data.len() {
        if fold_of[i] == fold {
            out.a[i] = 1.0 - out.a[i];
            out.y[i] = out.y[i] * -3.0 + 7.0;
        }
    }
    out
}

#[test]
fn held_out_predictions_ignore_their_own_outcomes() {
    let data = generate_dataset(SimSetting::D, 240, 23).unwrap();
    let folds = assign_folds(data.len(), 4, 5).unwrap();
    for scheme in [SplitScheme::TwoWay, SplitScheme::ThreeWay, SplitScheme::FourWay] {
        let base = cross_fit_nuisances(&data, &folds, scheme, &small_gbt(), 6).unwrap();
        for fold in 0..4 {
            let changed = perturb_fold(&data, folds.fold_of(), fold);
            let refit = cross_fit_nuisances(&changed, &folds, scheme, &small_gbt(), 6).unwrap();
            let mut others_moved = false;
            for i in 0..data.len() {
                if folds.fold_of()[i] == fold {
                    assert_eq!(base.at(i), refit.at(i), "{scheme} fold {fold} row {i}");
                } else if base.at(i) != refit.at(i) {
                    others_moved = true;
                }
            }
            assert!(others_moved, "perturbation had no effect outside fold {fold}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nuisance_fit_invariants_hold(seed in 0u64..1000, ways in 2usize..5) {
        let data = generate_dataset(SimSetting::A, 180, seed).unwrap();
        let folds = assign_folds(data.len(), 3, seed).unwrap();
        let scheme = SplitScheme::from_ways(ways).unwrap();
        let fit = cross_fit_nuisances(&data, &folds, scheme, &small_gbt(), seed).unwrap();
        let again = cross_fit_nuisances(&data, &folds, scheme, &small_gbt(), seed).unwrap();
        prop_assert_eq!(&fit, &again);
        for i in 0..fit.len() {
            prop_assert!(fit.pi_hat[i] >= 0.025 && fit.pi_hat[i] <= 0.975);
            prop_assert!(fit.kappa_hat[i] >= 0.025 && fit.kappa_hat[i] <= 0.975);
            prop_assert_eq!(fit.nu_hat[i], fit.pi_hat[i] * fit.kappa_hat[i]);
            if scheme != SplitScheme::FourWay {
                prop_assert_eq!(fit.kappa_hat[i], 1.0 - fit.pi_hat[i]);
            }
        }
    }

    #[test]
    fn folds_are_balanced(n in 1usize..500, k in 1usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = assign_folds(n, k, seed).unwrap();
        let sizes = folds.fold_sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
