//! Simulation benchmark harness.
//!
//! Every (setting, iteration) cell draws its own training set and test
//! covariates from seeds derived from the configuration seed, so cells can
//! run in any order and the table is canonicalised afterwards.

use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;

use crate::crossfit::NuisanceFit;
use crate::error::{CateError, Result};
use crate::learners::{fit_predict, nuisances_for, por_fit_predict, LearnerSpec, LearnerVariant, Stage2};
use crate::lp::{default_bandwidth, lp_estimate, KernelKind, LpConfig};
use crate::pseudo::{PseudoOutcomeKind, WeightScheme};
use crate::rng::derive_seed;
use crate::sim::{generate_dataset, sample_covariates, true_tau_rows, SimSetting};

pub const RESULTS_HEADER: &str = "setting,learner,weights,iteration,n,rmse,error";

/// Root mean squared difference between estimates and truth.
pub fn rmse(tau_hat: &[f64], tau_true: &[f64]) -> Result<f64> {
    if tau_hat.len() != tau_true.len() {
        return Err(CateError::DimensionMismatch {
            expected: tau_true.len(),
            found: tau_hat.len(),
        });
    }
    if tau_hat.is_empty() {
        return Err(CateError::InvalidParameter("rmse of an empty vector".into()));
    }
    let sse: f64 = tau_hat.iter().zip(tau_true).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / tau_hat.len() as f64).sqrt())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    Some(if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub settings: Vec<SimSetting>,
    pub learners: Vec<LearnerSpec>,
    pub n: usize,
    pub iterations: usize,
    pub seed: u64,
    pub test_size: usize,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(CateError::InvalidParameter("iterations must be at least 1".into()));
        }
        if self.test_size < 1 {
            return Err(CateError::InvalidParameter("test_size must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(CateError::InvalidParameter("n must be at least 2".into()));
        }
        if self.settings.is_empty() || self.learners.is_empty() {
            return Err(CateError::InvalidParameter(
                "need at least one setting and one learner".into(),
            ));
        }
        for l in &self.learners {
            l.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub setting: SimSetting,
    pub learner: String,
    pub weights: String,
    pub iteration: usize,
    pub n: usize,
    pub rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// rMSE values of the successful rows for one (setting, learner, weights) cell.
    pub fn rmses(&self, setting: SimSetting, learner: &str, weights: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.setting == setting && r.learner == learner && r.weights == weights)
            .filter_map(|r| r.rmse)
            .collect()
    }

    pub fn median_rmse(&self, setting: SimSetting, learner: &str, weights: &str) -> Option<f64> {
        median(&self.rmses(setting, learner, weights))
    }

    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULTS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let rmse = r.rmse.map(|v| v.to_string()).unwrap_or_default();
            let error = r.error.as_deref().map(csv_escape).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.setting, r.learner, r.weights, r.iteration, r.n, rmse, error
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    /// Median rMSE per (setting, learner, weights), in table order.
    pub fn summary_csv(&self) -> String {
        let mut keys: Vec<(SimSetting, &str, &str)> = Vec::new();
        for r in &self.rows {
            let k = (r.setting, r.learner.as_str(), r.weights.as_str());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let mut out = String::from("setting,learner,weights,median_rmse,successes,errors\n");
        for (s, l, w) in keys {
            let ok = self.rmses(s, l, w);
            let errors = self
                .rows
                .iter()
                .filter(|r| r.setting == s && r.learner == l && r.weights == w && r.error.is_some())
                .count();
            let med = median(&ok).map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{s},{l},{w},{med},{},{errors}", ok.len()).expect("writing to a String cannot fail");
        }
        out
    }
}

fn csv_escape(s: &str) -> String {
    let flat = s.replace(['\n', '\r'], " ");
    if flat.contains([',', '"']) {
        format!("\"{}\"", flat.replace('"', "\"\""))
    } else {
        flat
    }
}

/// Seeds for one benchmark cell: training data, test covariates, fitting.
fn cell_seeds(seed: u64, setting: SimSetting, iteration: usize) -> [u64; 3] {
    let base = [setting.index(), iteration as u64];
    [
        derive_seed(seed, &[base[0], base[1], 0]),
        derive_seed(seed, &[base[0], base[1], 1]),
        derive_seed(seed, &[base[0], base[1], 2]),
    ]
}

fn run_cell(cfg: &BenchConfig, setting: SimSetting, iteration: usize) -> Vec<ResultRow> {
    let [train_seed, test_seed, fit_seed] = cell_seeds(cfg.seed, setting, iteration);
    let row = |spec: &LearnerSpec, outcome: Result<f64>| {
        let (rmse, error) = match outcome {
            Ok(v) if v.is_finite() => (Some(v), None),
            Ok(v) => (None, Some(format!("non-finite rmse {v}"))),
            Err(e) => (None, Some(e.to_string())),
        };
        ResultRow {
            setting,
            learner: spec.learner_label(),
            weights: spec.weight_label().to_string(),
            iteration,
            n: cfg.n,
            rmse,
            error,
        }
    };

    let train = match generate_dataset(setting, cfg.n, train_seed) {
        Ok(d) => d,
        Err(e) => {
            let msg = e.to_string();
            return cfg
                .learners
                .iter()
                .map(|s| row(s, Err(CateError::InvalidParameter(msg.clone()))))
                .collect();
        }
    };
    let test_x = sample_covariates(setting, cfg.test_size, test_seed);
    let truth = true_tau_rows(setting, test_x.view());

    // Learners that agree on folds, split and nuisance model share one fit.
    let mut cache: Vec<(LearnerSpec, std::result::Result<NuisanceFit, String>)> = Vec::new();
    let mut rows = Vec::with_capacity(cfg.learners.len());
    for spec in &cfg.learners {
        let outcome = (|| -> Result<f64> {
            let truth = truth.as_ref().map_err(|e| CateError::InvalidParameter(e.to_string()))?;
            let tau_hat = match spec.variant {
                LearnerVariant::Por {
                    kind,
                    weights,
                    stage2,
                } => {
                    spec.validate()?;
                    let key = spec.nuisance_key();
                    let pos = cache.iter().position(|(s, _)| s.nuisance_key() == key);
                    let idx = match pos {
                        Some(i) => i,
                        None => {
                            let fit = nuisances_for(spec, &train, Some(setting), fit_seed).map_err(|e| e.to_string());
                            cache.push((*spec, fit));
                            cache.len() - 1
                        }
                    };
                    let nuis = cache[idx].1.as_ref().map_err(|e| CateError::InvalidParameter(e.clone()))?;
                    por_fit_predict(kind, weights, &stage2, &train, nuis, test_x.view(), fit_seed)?
                }
                LearnerVariant::TLearner(_) => fit_predict(spec, &train, Some(setting), test_x.view(), fit_seed)?,
            };
            rmse(&tau_hat, truth)
        })();
        rows.push(row(spec, outcome));
    }
    rows
}

/// Runs every learner on every (setting, iteration) cell.
///
/// Rows are ordered by setting, then learner, then iteration, in the order
/// given by the configuration. Learner failures become error rows.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<ResultsTable> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = (0..cfg.settings.len())
        .flat_map(|s| (0..cfg.iterations).map(move |t| (s, t)))
        .collect();
    let per_cell: Vec<Vec<ResultRow>> = cells
        .par_iter()
        .map(|&(s, t)| run_cell(cfg, cfg.settings[s], t))
        .collect();
    let mut rows = Vec::with_capacity(cells.len() * cfg.learners.len());
    for cells in per_cell.chunks(cfg.iterations) {
        for l in 0..cfg.learners.len() {
            rows.extend(cells.iter().map(|cell| cell[l].clone()));
        }
    }
    Ok(ResultsTable { rows })
}

/// One replicate of the oracle comparison in setting F: the U pseudo-outcome
/// with true nuisances, smoothed by a weighted local-linear fit with
/// residual-on-residual weights and with uniform weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightingComparison {
    pub grid: Vec<f64>,
    pub tau_true: Vec<f64>,
    pub weighted: Vec<f64>,
    pub unweighted: Vec<f64>,
    pub rmse_weighted: f64,
    pub rmse_unweighted: f64,
}

/// Evenly spaced points covering the support of setting F's covariate.
pub fn setting_f_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = (0.05, 0.95);
    match points {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

pub fn weighting_comparison(n: usize, grid_points: usize, h: Option<f64>, seed: u64) -> Result<WeightingComparison> {
    let setting = SimSetting::F;
    let train = generate_dataset(setting, n, seed)?;
    let grid = setting_f_grid(grid_points);
    let test_x = Array2::from_shape_vec((grid.len(), 1), grid.clone())
        .map_err(|e| CateError::InvalidParameter(e.to_string()))?;
    let tau_true = true_tau_rows(setting, test_x.view())?;
    let h = h.unwrap_or_else(|| default_bandwidth(n, 1, 1));
    let stage2 = Stage2::Lp(LpConfig::new(h, KernelKind::Epanechnikov, 1));
    let spec = LearnerSpec::por(PseudoOutcomeKind::U, WeightScheme::RLearner).with_oracle_nuisances(true);
    let nuis = nuisances_for(&spec, &train, Some(setting), seed)?;
    let weighted = por_fit_predict(PseudoOutcomeKind::U, WeightScheme::RLearner, &stage2, &train, &nuis, test_x.view(), seed)?;
    let unweighted = por_fit_predict(PseudoOutcomeKind::U, WeightScheme::Uniform, &stage2, &train, &nuis, test_x.view(), seed)?;
    Ok(WeightingComparison {
        rmse_weighted: rmse(&weighted, &tau_true)?,
        rmse_unweighted: rmse(&unweighted, &tau_true)?,
        grid,
        tau_true,
        weighted,
        unweighted,
    })
}

impl WeightingComparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,tau_true,tau_hat_weighted,tau_hat_unweighted\n");
        for i in 0..self.grid.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.grid[i], self.tau_true[i], self.weighted[i], self.unweighted[i]
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Oracle local-linear estimate at `x_new` in setting F: true-nuisance DR
/// pseudo-outcomes, weights `pi * kappa`, Epanechnikov kernel and the
/// default bandwidth for `n`.
pub fn oracle_estimate_setting_f(n: usize, x_new: f64, seed: u64) -> Result<f64> {
    let setting = SimSetting::F;
    let train = generate_dataset(setting, n, seed)?;
    let spec = LearnerSpec::por(PseudoOutcomeKind::DR, WeightScheme::InverseVarianceDR).with_oracle_nuisances(true);
    let nuis = nuisances_for(&spec, &train, Some(setting), seed)?;
    let (pseudo, _) = crate::learners::pseudo_outcomes_and_weights(
        PseudoOutcomeKind::DR,
        WeightScheme::InverseVarianceDR,
        &train,
        &nuis,
    )?;
    let cfg = LpConfig::new(default_bandwidth(n, 1, 1), KernelKind::Epanechnikov, 1);
    lp_estimate(&[x_new], train.x.view(), &pseudo, &nuis.nu_hat, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbt::GbtConfig;

    fn quick_spec(kind: PseudoOutcomeKind, weights: WeightScheme) -> LearnerSpec {
        let gbt = GbtConfig {
            num_trees: 20,
            ..GbtConfig::default()
        };
        let mut s = LearnerSpec::por(kind, weights).with_stage2(Stage2::Gbt(gbt));
        s.nuisance_gbt = gbt;
        s.folds = 3;
        s
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[3.0], &[0.0]).unwrap(), 3.0);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn single_cell_gives_one_row() {
        let cfg = BenchConfig {
            settings: vec![SimSetting::F],
            learners: vec![quick_spec(PseudoOutcomeKind::DR, WeightScheme::Uniform)],
            n: 200,
            iterations: 1,
            seed: 0,
            test_size: 50,
        };
        let table = run_benchmark(&cfg).unwrap();
        assert_eq!(table.len(), 1);
        assert!(table.rows[0].rmse.unwrap() >= 0.0);
    }

    #[test]
    fn row_order_and_determinism() {
        let cfg = BenchConfig {
            settings: vec![SimSetting::C, SimSetting::F],
            learners: vec![
                quick_spec(PseudoOutcomeKind::DR, WeightScheme::Uniform),
                quick_spec(PseudoOutcomeKind::DR, WeightScheme::InverseVarianceDR),
            ],
            n: 150,
            iterations: 2,
            seed: 5,
            test_size: 20,
        };
        let a = run_benchmark(&cfg).unwrap();
        let b = run_benchmark(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.len(), 8);
        let order: Vec<(SimSetting, &str, usize)> = a
            .rows
            .iter()
            .map(|r| (r.setting, r.weights.as_str(), r.iteration))
            .collect();
        assert_eq!(order[0], (SimSetting::C, "uniform", 0));
        assert_eq!(order[1], (SimSetting::C, "uniform", 1));
        assert_eq!(order[2], (SimSetting::C, "ivw", 0));
        assert_eq!(order[4], (SimSetting::F, "uniform", 0));
    }

    #[test]
    fn failures_become_error_rows() {
        let mut bad = quick_spec(PseudoOutcomeKind::DR, WeightScheme::Uniform);
        bad.folds = 100;
        let cfg = BenchConfig {
            settings: vec![SimSetting::F],
            learners: vec![bad, quick_spec(PseudoOutcomeKind::U, WeightScheme::RLearner)],
            n: 40,
            iterations: 1,
            seed: 1,
            test_size: 5,
        };
        let table = run_benchmark(&cfg).unwrap();
        assert_eq!(table.len(), 2);
        assert!(table.rows[0].error.is_some());
        assert!(table.to_csv().lines().count() == 3);
    }

    #[test]
    fn config_validation() {
        let mut cfg = BenchConfig {
            settings: vec![SimSetting::A],
            learners: vec![LearnerSpec::t_learner()],
            n: 100,
            iterations: 0,
            seed: 0,
            test_size: 10,
        };
        assert!(run_benchmark(&cfg).is_err());
        cfg.iterations = 1;
        cfg.test_size = 0;
        assert!(run_benchmark(&cfg).is_err());
    }

    #[test]
    fn csv_escaping() {
        assert_eq!(csv_escape("a,b"), "\"a,b\"");
        assert_eq!(csv_escape("say \"x\""), "\"say \"\"x\"\"\"");
        assert_eq!(csv_escape("plain"), "plain");
    }

    #[test]
    fn weighting_comparison_shapes() {
        let cmp = weighting_comparison(300, 11, None, 2).unwrap();
        assert_eq!(cmp.grid.len(), 11);
        assert!((cmp.grid[0] - 0.05).abs() < 1e-15 && (cmp.grid[10] - 0.95).abs() < 1e-12);
        assert!(cmp.rmse_weighted.is_finite() && cmp.rmse_unweighted.is_finite());
        assert_eq!(cmp.to_csv().lines().count(), 12);
    }
}
