//! Meta-learner assembly.
//!
//! A pseudo-outcome learner cross-fits the nuisances (or takes the true ones
//! from the simulation), turns every observation into a pseudo-outcome and a
//! regression weight, and fits one weighted stage-2 regression on the pooled
//! pseudo-outcomes. The T-learner is the plug-in difference of two outcome
//! models.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;

use crate::crossfit::{assign_folds, cross_fit_nuisances, fit_arm_models, NuisanceFit, SplitScheme};
use crate::error::{CateError, Result};
use crate::gbt::{self, GbtConfig};
use crate::lp::{lp_estimate, LpConfig};
use crate::pseudo::{pseudo_outcome, regression_weight, PseudoOutcomeKind, WeightScheme};
use crate::rng::derive_seed;
use crate::sim::{true_nuisance_rows, Dataset, SimSetting};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage2 {
    Gbt(GbtConfig),
    Lp(LpConfig),
    /// Weighted least squares on `[1, X]`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerVariant {
    Por {
        kind: PseudoOutcomeKind,
        weights: WeightScheme,
        stage2: Stage2,
    },
    TLearner(GbtConfig),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerSpec {
    pub variant: LearnerVariant,
    pub folds: usize,
    pub split: SplitScheme,
    pub nuisance_gbt: GbtConfig,
    pub oracle_nuisances: bool,
}

impl LearnerSpec {
    /// Pseudo-outcome learner with default cross-fitting (10 folds, two-way)
    /// and a boosted-tree final stage.
    pub fn por(kind: PseudoOutcomeKind, weights: WeightScheme) -> Self {
        LearnerSpec {
            variant: LearnerVariant::Por {
                kind,
                weights,
                stage2: Stage2::Gbt(GbtConfig::default()),
            },
            folds: 10,
            split: SplitScheme::TwoWay,
            nuisance_gbt: GbtConfig::default(),
            oracle_nuisances: kind == PseudoOutcomeKind::OracleR,
        }
    }

    pub fn t_learner() -> Self {
        LearnerSpec {
            variant: LearnerVariant::TLearner(GbtConfig::default()),
            folds: 10,
            split: SplitScheme::TwoWay,
            nuisance_gbt: GbtConfig::default(),
            oracle_nuisances: false,
        }
    }

    pub fn with_stage2(mut self, stage2: Stage2) -> Self {
        if let LearnerVariant::Por { stage2: s, .. } = &mut self.variant {
            *s = stage2;
        }
        self
    }

    pub fn with_oracle_nuisances(mut self, oracle: bool) -> Self {
        self.oracle_nuisances = oracle;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.variant {
            LearnerVariant::Por { kind, stage2, .. } => {
                if kind == PseudoOutcomeKind::OracleR && !self.oracle_nuisances {
                    return Err(CateError::InvalidParameter(
                        "the oracle-R pseudo-outcome requires true nuisances".into(),
                    ));
                }
                if let Stage2::Gbt(cfg) = stage2 {
                    cfg.validate()?;
                }
                if !self.oracle_nuisances {
                    if self.folds < 2 {
                        return Err(CateError::InvalidParameter(
                            "cross-fitting needs at least 2 folds".into(),
                        ));
                    }
                    self.nuisance_gbt.validate()?;
                }
            }
            LearnerVariant::TLearner(cfg) => cfg.validate()?,
        }
        Ok(())
    }

    /// Short name of the pseudo-outcome (or `T`).
    pub fn learner_label(&self) -> String {
        match self.variant {
            LearnerVariant::Por { kind, .. } => {
                if self.oracle_nuisances && kind != PseudoOutcomeKind::OracleR {
                    format!("{kind}-oracle")
                } else {
                    kind.label().to_string()
                }
            }
            LearnerVariant::TLearner(_) => "T".to_string(),
        }
    }

    pub fn weight_label(&self) -> &'static str {
        match self.variant {
            LearnerVariant::Por { weights, .. } => weights.label(),
            LearnerVariant::TLearner(_) => "none",
        }
    }

    /// Identifies the nuisance fit this learner consumes, so learners that
    /// agree on it can share one cross-fit.
    pub(crate) fn nuisance_key(&self) -> Option<(usize, SplitScheme, GbtConfig, bool)> {
        match self.variant {
            LearnerVariant::Por { .. } => Some((
                self.folds,
                self.split,
                self.nuisance_gbt,
                self.oracle_nuisances,
            )),
            LearnerVariant::TLearner(_) => None,
        }
    }
}

/// Nuisances for a pseudo-outcome learner: truth or a cross-fit.
pub fn nuisances_for(
    spec: &LearnerSpec,
    train: &Dataset,
    truth: Option<SimSetting>,
    seed: u64,
) -> Result<NuisanceFit> {
    if spec.oracle_nuisances {
        let setting = truth.ok_or(CateError::MissingTruth)?;
        let values = true_nuisance_rows(setting, train.x.view())?;
        return Ok(NuisanceFit::from_values(&values));
    }
    let folds = assign_folds(train.len(), spec.folds, derive_seed(seed, &[0xF01D]))?;
    cross_fit_nuisances(train, &folds, spec.split, &spec.nuisance_gbt, derive_seed(seed, &[0xC7]))
}

/// Per-row pseudo-outcomes and regression weights.
pub fn pseudo_outcomes_and_weights(
    kind: PseudoOutcomeKind,
    weights: WeightScheme,
    train: &Dataset,
    nuisances: &NuisanceFit,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if nuisances.len() != train.len() {
        return Err(CateError::DimensionMismatch {
            expected: train.len(),
            found: nuisances.len(),
        });
    }
    let mut pseudo = Vec::with_capacity(train.len());
    let mut w = Vec::with_capacity(train.len());
    for i in 0..train.len() {
        let nv = nuisances.at(i);
        pseudo.push(pseudo_outcome(kind, train.a[i], train.y[i], &nv)?);
        w.push(regression_weight(weights, train.a[i], &nv));
    }
    Ok((pseudo, w))
}

/// Fits the stage-2 regression of `pseudo` on the training covariates and
/// predicts at `test_x`.
pub fn fit_stage2(
    stage2: &Stage2,
    train_x: ArrayView2<f64>,
    pseudo: &[f64],
    weights: &[f64],
    test_x: ArrayView2<f64>,
    seed: u64,
) -> Result<Vec<f64>> {
    if test_x.ncols() != train_x.ncols() {
        return Err(CateError::DimensionMismatch {
            expected: train_x.ncols(),
            found: test_x.ncols(),
        });
    }
    match stage2 {
        Stage2::Gbt(cfg) => gbt::fit(train_x, pseudo, weights, cfg, seed)?.predict(test_x),
        Stage2::Lp(cfg) => test_x
            .rows()
            .into_iter()
            .map(|row| lp_estimate(&row.to_vec(), train_x, pseudo, weights, cfg))
            .collect(),
        Stage2::Linear => {
            let beta = weighted_linear_fit(train_x, pseudo, weights)?;
            Ok(linear_predict(&beta, test_x))
        }
    }
}

/// Pseudo-outcome learner on precomputed nuisances.
pub fn por_fit_predict(
    kind: PseudoOutcomeKind,
    weights: WeightScheme,
    stage2: &Stage2,
    train: &Dataset,
    nuisances: &NuisanceFit,
    test_x: ArrayView2<f64>,
    seed: u64,
) -> Result<Vec<f64>> {
    let (pseudo, w) = pseudo_outcomes_and_weights(kind, weights, train, nuisances)?;
    fit_stage2(stage2, train.x.view(), &pseudo, &w, test_x, derive_seed(seed, &[0x57A6E2]))
}

/// Fits the learner on `train` and returns effect estimates at `test_x`.
pub fn fit_predict(
    spec: &LearnerSpec,
    train: &Dataset,
    truth: Option<SimSetting>,
    test_x: ArrayView2<f64>,
    seed: u64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if train.is_empty() {
        return Err(CateError::InvalidParameter("training set is empty".into()));
    }
    match spec.variant {
        LearnerVariant::Por {
            kind,
            weights,
            stage2,
        } => {
            let nuisances = nuisances_for(spec, train, truth, seed)?;
            por_fit_predict(kind, weights, &stage2, train, &nuisances, test_x, seed)
        }
        LearnerVariant::TLearner(cfg) => t_learner(train, &cfg, test_x, seed),
    }
}

pub fn t_learner(train: &Dataset, cfg: &GbtConfig, test_x: ArrayView2<f64>, seed: u64) -> Result<Vec<f64>> {
    let (m0, m1) = fit_arm_models(train, cfg, derive_seed(seed, &[0x7]))?;
    let p1 = m1.predict(test_x)?;
    let p0 = m0.predict(test_x)?;
    Ok(p1.iter().zip(&p0).map(|(a, b)| a - b).collect())
}

fn design_row(x: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(x.iter().copied()).collect()
}

/// Least squares `argmin sum_i (target_i - rows_i . beta)^2` via QR.
fn least_squares(rows: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Vec<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, |r| r.len());
    if n < p {
        return Err(CateError::InvalidParameter(format!(
            "least squares needs at least {p} rows, got {n}"
        )));
    }
    let design = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let rhs = DVector::from_vec(target);
    let qr = design.qr();
    let qtb = qr.q().transpose() * rhs;
    let r = qr.r();
    r.solve_upper_triangular(&qtb)
        .map(|beta| beta.iter().copied().collect())
        .ok_or_else(|| CateError::InvalidParameter("design matrix is rank deficient".into()))
}

/// Weighted least squares of `y` on `[1, X]`.
pub fn weighted_linear_fit(x: ArrayView2<f64>, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if y.len() != x.nrows() || w.len() != x.nrows() {
        return Err(CateError::DimensionMismatch {
            expected: x.nrows(),
            found: y.len().min(w.len()),
        });
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(CateError::InvalidParameter("weights must be nonnegative".into()));
    }
    let mut rows = Vec::with_capacity(x.nrows());
    let mut target = Vec::with_capacity(x.nrows());
    for (i, r) in x.rows().into_iter().enumerate() {
        let s = w[i].sqrt();
        rows.push(design_row(&r.to_vec()).into_iter().map(|v| v * s).collect());
        target.push(y[i] * s);
    }
    least_squares(rows, target)
}

pub fn linear_predict(beta: &[f64], x: ArrayView2<f64>) -> Vec<f64> {
    x.rows()
        .into_iter()
        .map(|r| beta[0] + r.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Direct minimiser of the residual-on-residual loss
/// `sum_i [(Y_i - eta_i) - (A_i - pi_i) tau(X_i)]^2` over linear
/// `tau(x) = [1, x] . beta`.
pub fn rlearner_linear_direct(train: &Dataset, eta_hat: &[f64], pi_hat: &[f64]) -> Result<Vec<f64>> {
    let n = train.len();
    if eta_hat.len() != n || pi_hat.len() != n {
        return Err(CateError::DimensionMismatch {
            expected: n,
            found: eta_hat.len().min(pi_hat.len()),
        });
    }
    let mut rows = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for (i, r) in train.x.rows().into_iter().enumerate() {
        let ra = train.a[i] - pi_hat[i];
        rows.push(design_row(&r.to_vec()).into_iter().map(|v| v * ra).collect());
        target.push(train.y[i] - eta_hat[i]);
    }
    least_squares(rows, target)
}
