use ivw_cate::gbt::{fit, GbtConfig};
use ndarray::Array2;
use proptest::prelude::*;

fn config(trees: usize, depth: usize) -> GbtConfig {
    GbtConfig {
        num_trees: trees,
        learning_rate: 0.5,
        max_depth: depth,
        min_samples_leaf: 1,
        subsample_fraction: 1.0,
    }
}

fn weighted_sse(pred: &[f64], y: &[f64], w: &[f64]) -> f64 {
    pred.iter()
        .zip(y)
        .zip(w)
        .map(|((p, t), w)| w * (p - t) * (p - t))
        .sum()
}

fn replicate(x: &Array2<f64>, y: &[f64], w: &[usize]) -> (Array2<f64>, Vec<f64>) {
    let d = x.ncols();
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (i, &c) in w.iter().enumerate() {
        for _ in 0..c {
            rows.extend(x.row(i).iter().copied());
            ys.push(y[i]);
        }
    }
    (Array2::from_shape_vec((ys.len(), d), rows).unwrap(), ys)
}

#[test]
fn integer_weights_equal_replication_exactly_on_dyadic_data() {
    // Values chosen so every partial sum and mean is exact in binary.
    let x = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let y = [0.0, 2.0, 4.0, 8.0];
    let w = [2usize, 2, 2, 2];
    let wf: Vec<f64> = w.iter().map(|&c| c as f64).collect();
    let cfg = config(1, 1);
    let weighted = fit(x.view(), &y, &wf, &cfg, 0).unwrap();
    let (xr, yr) = replicate(&x, &y, &w);
    let replicated = fit(xr.view(), &yr, &vec![1.0; yr.len()], &cfg, 0).unwrap();
    assert_eq!(weighted.predict(x.view()).unwrap(), replicated.predict(x.view()).unwrap());
}

fn dataset(max_rows: usize) -> impl Strategy<Value = (Array2<f64>, Vec<f64>, Vec<usize>)> {
    (4..max_rows).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..1.0, n * 2),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(1usize..4, n),
        )
            .prop_map(move |(xs, y, w)| (Array2::from_shape_vec((n, 2), xs).unwrap(), y, w))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integer_weights_match_replicated_rows((x, y, w) in dataset(30)) {
        let wf: Vec<f64> = w.iter().map(|&c| c as f64).collect();
        let cfg = config(5, 2);
        let weighted = fit(x.view(), &y, &wf, &cfg, 1).unwrap();
        let (xr, yr) = replicate(&x, &y, &w);
        let replicated = fit(xr.view(), &yr, &vec![1.0; yr.len()], &cfg, 1).unwrap();
        let a = weighted.predict(x.view()).unwrap();
        let b = replicated.predict(x.view()).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-9, "{p} vs {q}");
        }
    }

    #[test]
    fn training_loss_never_increases((x, y, w) in dataset(40)) {
        let wf: Vec<f64> = w.iter().map(|&c| c as f64).collect();
        let model = fit(x.view(), &y, &wf, &config(12, 2), 2).unwrap();
        let mut pred = vec![model.initial_prediction; y.len()];
        let mut last = weighted_sse(&pred, &y, &wf);
        for tree in &model.trees {
            for (i, p) in pred.iter_mut().enumerate() {
                *p += model.learning_rate * tree.predict_row(&x.row(i).to_vec());
            }
            let loss = weighted_sse(&pred, &y, &wf);
            prop_assert!(loss <= last + 1e-9 * (1.0 + last), "{loss} > {last}");
            last = loss;
        }
    }

    #[test]
    fn shifting_targets_shifts_predictions((x, y, w) in dataset(30), c in -10.0f64..10.0) {
        let wf: Vec<f64> = w.iter().map(|&c| c as f64).collect();
        let cfg = config(8, 3);
        let base = fit(x.view(), &y, &wf, &cfg, 3).unwrap().predict(x.view()).unwrap();
        let shifted_y: Vec<f64> = y.iter().map(|v| v + c).collect();
        let shifted = fit(x.view(), &shifted_y, &wf, &cfg, 3).unwrap().predict(x.view()).unwrap();
        for (p, q) in base.iter().zip(&shifted) {
            prop_assert!((p + c - q).abs() < 1e-9);
        }
    }
}
