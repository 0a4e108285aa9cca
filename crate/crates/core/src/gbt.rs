//! Weighted gradient-boosted regression trees under squared-error loss.
//!
//! Stagewise fitting: the model starts at the weighted mean of the targets,
//! and every tree is grown on the current residuals. Splits maximise the
//! reduction in weighted sum of squared errors over all midpoints between
//! consecutive distinct feature values; leaves hold the weighted mean
//! residual of the rows they contain. Ties in gain keep the first candidate
//! seen, which is the lowest feature index and then the lowest threshold.

use std::fmt::Write as _;

use ndarray::ArrayView2;
use rand::Rng;

use crate::error::{CateError, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtConfig {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Minimum number of rows (regardless of weight) in each child.
    pub min_samples_leaf: usize,
    pub subsample_fraction: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            num_trees: 200,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 20,
            subsample_fraction: 1.0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CateError::InvalidParameter(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_depth < 1 {
            return Err(CateError::InvalidParameter("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(CateError::InvalidParameter(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(CateError::InvalidParameter(format!(
                "subsample_fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A single regression tree; node 0 is the root. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_with<F: Fn(usize) -> f64>(&self, value_of: F) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if value_of(feature) <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_with(|f| row[f])
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub initial_prediction: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let boost: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.initial_prediction + self.learning_rate * boost
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(CateError::DimensionMismatch {
                expected: self.n_features,
                found: x.ncols(),
            });
        }
        let mut row = vec![0.0; self.n_features];
        Ok(x.rows()
            .into_iter()
            .map(|r| {
                row.iter_mut().zip(r.iter()).for_each(|(dst, &v)| *dst = v);
                self.predict_row(&row)
            })
            .collect())
    }

    /// Plain-text dump, one node per line:
    /// `id feature threshold left right value`, with `-` for fields that do
    /// not apply to the node type.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# initial_prediction={} learning_rate={} n_features={} trees={}",
            self.initial_prediction,
            self.learning_rate,
            self.n_features,
            self.trees.len()
        );
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(out, "tree {t}");
            for (id, node) in tree.nodes.iter().enumerate() {
                let _ = match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(out, "{id} {feature} {threshold} {left} {right} -"),
                    Node::Leaf { value } => writeln!(out, "{id} - - - - {value}"),
                };
            }
        }
        out
    }
}

/// `min(max(p, eps), 1 - eps)`.
pub fn clip_probability(p: f64, eps: f64) -> f64 {
    debug_assert!(eps > 0.0 && eps < 0.5);
    p.max(eps).min(1.0 - eps)
}

struct Grower<'a> {
    cols: &'a [Vec<f64>],
    residual: &'a [f64],
    weight: &'a [f64],
    config: &'a GbtConfig,
    nodes: Vec<Node>,
    go_left: Vec<bool>,
}

struct SplitChoice {
    feature: usize,
    position: usize,
    threshold: f64,
}

impl Grower<'_> {
    /// `lists[f]` holds the node's rows sorted by feature `f`.
    fn grow(&mut self, lists: Vec<Vec<u32>>, depth: usize) -> usize {
        let rows = &lists[0];
        let (mut wsum, mut rsum) = (0.0, 0.0);
        for &i in rows {
            let i = i as usize;
            wsum += self.weight[i];
            rsum += self.weight[i] * self.residual[i];
        }
        let leaf_value = if wsum > 0.0 { rsum / wsum } else { 0.0 };
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: leaf_value });

        if depth >= self.config.max_depth
            || rows.len() < 2 * self.config.min_samples_leaf
            || wsum <= 0.0
        {
            return id;
        }
        let Some(choice) = self.best_split(&lists, wsum, rsum) else {
            return id;
        };

        let sorted = &lists[choice.feature];
        for (k, &i) in sorted.iter().enumerate() {
            self.go_left[i as usize] = k <= choice.position;
        }
        let mut left_lists = Vec::with_capacity(lists.len());
        let mut right_lists = Vec::with_capacity(lists.len());
        let n_left = choice.position + 1;
        for list in &lists {
            let mut l = Vec::with_capacity(n_left);
            let mut r = Vec::with_capacity(list.len() - n_left);
            for &i in list {
                if self.go_left[i as usize] {
                    l.push(i);
                } else {
                    r.push(i);
                }
            }
            left_lists.push(l);
            right_lists.push(r);
        }
        drop(lists);
        let left = self.grow(left_lists, depth + 1);
        let right = self.grow(right_lists, depth + 1);
        self.nodes[id] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, lists: &[Vec<u32>], wsum: f64, rsum: f64) -> Option<SplitChoice> {
        let min_leaf = self.config.min_samples_leaf;
        let parent = rsum * rsum / wsum;
        let mut best_gain = 0.0;
        let mut best = None;
        for (feature, list) in lists.iter().enumerate() {
            let col = &self.cols[feature];
            let m = list.len();
            let (mut wl, mut sl) = (0.0, 0.0);
            for k in 0..m - 1 {
                let i = list[k] as usize;
                wl += self.weight[i];
                sl += self.weight[i] * self.residual[i];
                let n_left = k + 1;
                if n_left < min_leaf {
                    continue;
                }
                if m - n_left < min_leaf {
                    break;
                }
                let here = col[i];
                let next = col[list[k + 1] as usize];
                if here == next {
                    continue;
                }
                let wr = wsum - wl;
                if wl <= 0.0 || wr <= 0.0 {
                    continue;
                }
                let sr = rsum - sl;
                let gain = sl * sl / wl + sr * sr / wr - parent;
                if gain > best_gain {
                    best_gain = gain;
                    let mut threshold = here + (next - here) / 2.0;
                    if threshold >= next {
                        threshold = here;
                    }
                    best = Some(SplitChoice {
                        feature,
                        position: k,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

/// Fits a boosted ensemble to `(x, y)` with nonnegative row weights `w`.
pub fn fit(
    x: ArrayView2<f64>,
    y: &[f64],
    w: &[f64],
    config: &GbtConfig,
    seed: u64,
) -> Result<GbtModel> {
    config.validate()?;
    let (n, d) = x.dim();
    if n < 2 {
        return Err(CateError::InvalidParameter(format!(
            "boosting needs at least 2 rows, got {n}"
        )));
    }
    for len in [y.len(), w.len()] {
        if len != n {
            return Err(CateError::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(CateError::NonFinite("covariates"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CateError::NonFinite("targets"));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(CateError::InvalidParameter(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let wsum: f64 = w.iter().sum();
    if wsum <= 0.0 {
        return Err(CateError::ZeroWeights);
    }
    let initial_prediction = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum::<f64>() / wsum;

    let cols: Vec<Vec<f64>> = (0..d).map(|j| x.column(j).to_vec()).collect();
    let sorted: Vec<Vec<u32>> = cols
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            idx
        })
        .collect();

    let mut current = vec![initial_prediction; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.num_trees);
    let subsample = config.subsample_fraction < 1.0;
    let sample_size = ((config.subsample_fraction * n as f64).round() as usize).clamp(1, n);
    let mut in_sample = vec![true; n];
    let mut go_left = vec![false; n];

    for t in 0..config.num_trees {
        for i in 0..n {
            residual[i] = y[i] - current[i];
        }
        if subsample {
            draw_subsample(&mut in_sample, sample_size, derive_seed(seed, &[t as u64]));
        }
        let lists: Vec<Vec<u32>> = sorted
            .iter()
            .map(|s| {
                if subsample {
                    s.iter().copied().filter(|&i| in_sample[i as usize]).collect()
                } else {
                    s.clone()
                }
            })
            .collect();
        let mut grower = Grower {
            cols: &cols,
            residual: &residual,
            weight: w,
            config,
            nodes: Vec::new(),
            go_left: std::mem::take(&mut go_left),
        };
        grower.grow(lists, 0);
        go_left = grower.go_left;
        let tree = Tree {
            nodes: grower.nodes,
        };
        for (i, f) in current.iter_mut().enumerate() {
            *f += config.learning_rate * tree.predict_with(|j| cols[j][i]);
        }
        trees.push(tree);
    }

    Ok(GbtModel {
        initial_prediction,
        learning_rate: config.learning_rate,
        n_features: d,
        trees,
    })
}

fn draw_subsample(mask: &mut [bool], size: usize, seed: u64) {
    let n = mask.len();
    let mut rng = rng_from_seed(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    mask.iter_mut().for_each(|m| *m = false);
    for &i in &pool[..size] {
        mask[i] = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn stump() -> GbtConfig {
        GbtConfig {
            num_trees: 1,
            learning_rate: 1.0,
            max_depth: 1,
            min_samples_leaf: 1,
            subsample_fraction: 1.0,
        }
    }

    #[test]
    fn hand_traced_stump() {
        let x = array![[0.0], [1.0]];
        let model = fit(x.view(), &[0.0, 1.0], &[1.0, 1.0], &stump(), 0).unwrap();
        assert_eq!(model.initial_prediction, 0.5);
        assert_eq!(model.predict(x.view()).unwrap(), vec![0.0, 1.0]);
        assert_eq!(model.predict_row(&[0.0]), 0.0);
        assert_eq!(model.trees[0].num_nodes(), 3);
    }

    #[test]
    fn constant_target() {
        let x = Array2::from_shape_fn((50, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let w: Vec<f64> = (0..50).map(|i| 0.5 + (i % 3) as f64).collect();
        let model = fit(x.view(), &[2.5; 50], &w, &GbtConfig::default(), 1).unwrap();
        assert!(model.predict(x.view()).unwrap().iter().all(|&p| p == 2.5));
    }

    #[test]
    fn zero_weight_row_is_ignored() {
        let cfg = GbtConfig {
            num_trees: 0,
            ..stump()
        };
        let x = array![[0.0], [1.0]];
        let model = fit(x.view(), &[3.0, 99.0], &[1.0, 0.0], &cfg, 0).unwrap();
        assert_eq!(model.predict(x.view()).unwrap(), vec![3.0, 3.0]);
        assert!(model.trees.is_empty());
    }

    #[test]
    fn predict_edge_cases() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let model = fit(x.view(), &[1.0, 2.0, 1.0], &[1.0; 3], &stump(), 0).unwrap();
        let p = model.predict(x.view()).unwrap();
        assert_eq!(p[0], p[2]);
        assert!(matches!(
            model.predict(array![[0.0]].view()),
            Err(CateError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn input_errors() {
        let x = array![[0.0], [1.0]];
        let cfg = stump();
        assert!(matches!(
            fit(x.view(), &[0.0, 1.0], &[0.0, 0.0], &cfg, 0),
            Err(CateError::ZeroWeights)
        ));
        assert!(fit(x.view(), &[f64::NAN, 1.0], &[1.0, 1.0], &cfg, 0).is_err());
        assert!(fit(array![[f64::NAN], [1.0]].view(), &[0.0, 1.0], &[1.0, 1.0], &cfg, 0).is_err());
        assert!(fit(x.view(), &[0.0, 1.0], &[-1.0, 2.0], &cfg, 0).is_err());
        assert!(fit(x.view(), &[0.0], &[1.0, 1.0], &cfg, 0).is_err());
        assert!(fit(array![[0.0]].view(), &[0.0], &[1.0], &cfg, 0).is_err());
        let bad = GbtConfig {
            subsample_fraction: 0.0,
            ..cfg
        };
        assert!(fit(x.view(), &[0.0, 1.0], &[1.0, 1.0], &bad, 0).is_err());
    }

    #[test]
    fn tie_breaks_to_lowest_feature() {
        // Both columns separate the targets identically.
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let model = fit(x.view(), &[0.0, 1.0], &[1.0, 1.0], &stump(), 0).unwrap();
        assert!(matches!(
            model.trees[0].nodes[0],
            Node::Split { feature: 0, threshold, .. } if threshold == 0.5
        ));
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_probability(-0.2, 0.025), 0.025);
        assert_eq!(clip_probability(0.5, 0.025), 0.5);
        assert_eq!(clip_probability(1.7, 0.025), 0.975);
    }

    #[test]
    fn dump_lists_every_node() {
        let x = array![[0.0], [1.0]];
        let model = fit(x.view(), &[0.0, 1.0], &[1.0, 1.0], &stump(), 0).unwrap();
        let dump = model.dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "tree 0");
        assert_eq!(lines[2], "0 0 0.5 1 2 -");
        assert_eq!(lines[3], "1 - - - - -0.5");
    }

    #[test]
    fn subsampling_is_seeded() {
        let x = Array2::from_shape_fn((200, 3), |(i, j)| ((i * 31 + j * 17) % 97) as f64);
        let y: Vec<f64> = (0..200).map(|i| (i % 13) as f64).collect();
        let cfg = GbtConfig {
            subsample_fraction: 0.5,
            num_trees: 20,
            min_samples_leaf: 5,
            ..GbtConfig::default()
        };
        let a = fit(x.view(), &y, &[1.0; 200], &cfg, 4).unwrap();
        let b = fit(x.view(), &y, &[1.0; 200], &cfg, 4).unwrap();
        let c = fit(x.view(), &y, &[1.0; 200], &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
