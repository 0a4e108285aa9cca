//! Fold assignment and cross-fitted nuisance estimation.
//!
//! For each held-out fold the nuisance models are trained on the remaining
//! folds only and evaluated on the held-out rows. The split scheme controls
//! how that training complement is shared between nuisances:
//!
//! * two-way: every nuisance uses the whole complement, `kappa = 1 - pi`;
//! * three-way: outcome models (`mu0`, `mu1`, `eta`) and the propensity use
//!   disjoint halves, `kappa = 1 - pi`;
//! * four-way: outcome models, `pi` and `kappa` use disjoint thirds, with
//!   `kappa` fit by regressing `1 - A` on `X`.

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{CateError, Result};
use crate::gbt::{self, clip_probability, GbtConfig};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sim::{Dataset, NuisanceValues};

/// Propensity clipping level applied to every fitted `pi` and `kappa`.
pub const PROPENSITY_CLIP: f64 = 0.025;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn from_vec(fold_of: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 || fold_of.iter().any(|&f| f >= k) {
            return Err(CateError::InvalidParameter(format!(
                "fold indices must lie in [0, {k})"
            )));
        }
        Ok(FoldAssignment { fold_of, k })
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn num_folds(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Random balanced partition of `0..n` into `k` folds.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 || k > n {
        return Err(CateError::InvalidParameter(format!(
            "need 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { fold_of, k })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitScheme {
    TwoWay,
    ThreeWay,
    FourWay,
}

impl SplitScheme {
    pub fn ways(self) -> usize {
        match self {
            SplitScheme::TwoWay => 2,
            SplitScheme::ThreeWay => 3,
            SplitScheme::FourWay => 4,
        }
    }

    pub fn from_ways(ways: usize) -> Result<Self> {
        match ways {
            2 => Ok(SplitScheme::TwoWay),
            3 => Ok(SplitScheme::ThreeWay),
            4 => Ok(SplitScheme::FourWay),
            other => Err(CateError::InvalidParameter(format!(
                "split must be 2, 3 or 4 ways, got {other}"
            ))),
        }
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-way", self.ways())
    }
}

impl FromStr for SplitScheme {
    type Err = CateError;

    fn from_str(s: &str) -> Result<Self> {
        let ways = s
            .trim()
            .trim_end_matches("-way")
            .parse::<usize>()
            .map_err(|_| CateError::Parse(format!("invalid split scheme '{s}'")))?;
        SplitScheme::from_ways(ways)
    }
}

/// Out-of-fold nuisance predictions, one entry per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFit {
    pub mu0_hat: Vec<f64>,
    pub mu1_hat: Vec<f64>,
    pub eta_hat: Vec<f64>,
    pub pi_hat: Vec<f64>,
    pub kappa_hat: Vec<f64>,
    pub nu_hat: Vec<f64>,
}

impl NuisanceFit {
    pub fn from_values(values: &[NuisanceValues]) -> Self {
        NuisanceFit {
            mu0_hat: values.iter().map(|v| v.mu0).collect(),
            mu1_hat: values.iter().map(|v| v.mu1).collect(),
            eta_hat: values.iter().map(|v| v.eta).collect(),
            pi_hat: values.iter().map(|v| v.pi).collect(),
            kappa_hat: values.iter().map(|v| v.kappa).collect(),
            nu_hat: values.iter().map(|v| v.nu).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pi_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_hat.is_empty()
    }

    pub fn at(&self, i: usize) -> NuisanceValues {
        NuisanceValues {
            mu0: self.mu0_hat[i],
            mu1: self.mu1_hat[i],
            eta: self.eta_hat[i],
            pi: self.pi_hat[i],
            kappa: self.kappa_hat[i],
            nu: self.nu_hat[i],
        }
    }
}

struct FoldPrediction {
    rows: Vec<usize>,
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    eta: Vec<f64>,
    pi: Vec<f64>,
    kappa: Option<Vec<f64>>,
}

fn fit_and_predict(
    train: &Dataset,
    target: &[f64],
    held_out: &Dataset,
    gbt_config: &GbtConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let weights = vec![1.0; train.len()];
    let model = gbt::fit(train.x.view(), target, &weights, gbt_config, seed)?;
    model.predict(held_out.x.view())
}

fn require_rows(
    fold: usize,
    nuisance: &'static str,
    missing: &'static str,
    rows: &[usize],
) -> Result<()> {
    if rows.len() < 2 {
        return Err(CateError::DegenerateFold {
            fold,
            nuisance,
            missing,
        });
    }
    Ok(())
}

fn fit_fold(
    data: &Dataset,
    folds: &FoldAssignment,
    fold: usize,
    scheme: SplitScheme,
    gbt_config: &GbtConfig,
    seed: u64,
) -> Result<FoldPrediction> {
    let held: Vec<usize> = folds.members(fold);
    let mut complement: Vec<usize> = (0..data.len())
        .filter(|&i| folds.fold_of[i] != fold)
        .collect();
    let fold_seed = derive_seed(seed, &[fold as u64]);

    let parts: Vec<Vec<usize>> = match scheme {
        SplitScheme::TwoWay => vec![complement],
        SplitScheme::ThreeWay | SplitScheme::FourWay => {
            let pieces = scheme.ways() - 1;
            complement.shuffle(&mut rng_from_seed(derive_seed(fold_seed, &[u64::MAX])));
            let m = complement.len();
            (0..pieces)
                .map(|p| {
                    let mut part = complement[p * m / pieces..(p + 1) * m / pieces].to_vec();
                    part.sort_unstable();
                    part
                })
                .collect()
        }
    };
    let outcome_rows = &parts[0];
    let pi_rows = parts.get(1).unwrap_or(&parts[0]);

    let treated: Vec<usize> = outcome_rows
        .iter()
        .copied()
        .filter(|&i| data.treated(i))
        .collect();
    let control: Vec<usize> = outcome_rows
        .iter()
        .copied()
        .filter(|&i| !data.treated(i))
        .collect();
    require_rows(fold, "mu1", "treated", &treated)?;
    require_rows(fold, "mu0", "control", &control)?;
    require_rows(fold, "pi", "training", pi_rows)?;

    let held_out = data.select(&held);
    let t = data.select(&treated);
    let c = data.select(&control);
    let o = data.select(outcome_rows);
    let p = data.select(pi_rows);

    let mu1 = fit_and_predict(&t, t.y.as_slice().unwrap(), &held_out, gbt_config, derive_seed(fold_seed, &[1]))?;
    let mu0 = fit_and_predict(&c, c.y.as_slice().unwrap(), &held_out, gbt_config, derive_seed(fold_seed, &[0]))?;
    let eta = fit_and_predict(&o, o.y.as_slice().unwrap(), &held_out, gbt_config, derive_seed(fold_seed, &[2]))?;
    let pi = fit_and_predict(&p, p.a.as_slice().unwrap(), &held_out, gbt_config, derive_seed(fold_seed, &[3]))?;

    let kappa = match parts.get(2) {
        Some(kappa_rows) => {
            require_rows(fold, "kappa", "training", kappa_rows)?;
            let k = data.select(kappa_rows);
            let control_indicator: Array1<f64> = k.a.mapv(|a| 1.0 - a);
            let fitted = fit_and_predict(
                &k,
                control_indicator.as_slice().unwrap(),
                &held_out,
                gbt_config,
                derive_seed(fold_seed, &[4]),
            )?;
            Some(fitted)
        }
        None => None,
    };

    Ok(FoldPrediction {
        rows: held,
        mu0,
        mu1,
        eta,
        pi,
        kappa,
    })
}

/// Cross-fitted nuisance predictions at every observation.
///
/// Folds are fit in parallel; each uses a seed derived from `(seed, fold)`,
/// so the result does not depend on scheduling.
pub fn cross_fit_nuisances(
    data: &Dataset,
    folds: &FoldAssignment,
    scheme: SplitScheme,
    gbt_config: &GbtConfig,
    seed: u64,
) -> Result<NuisanceFit> {
    if folds.len() != data.len() {
        return Err(CateError::DimensionMismatch {
            expected: data.len(),
            found: folds.len(),
        });
    }
    if folds.num_folds() < 2 {
        return Err(CateError::InvalidParameter(
            "cross-fitting needs at least 2 folds".into(),
        ));
    }
    gbt_config.validate()?;
    let per_fold: Vec<FoldPrediction> = (0..folds.num_folds())
        .into_par_iter()
        .map(|fold| fit_fold(data, folds, fold, scheme, gbt_config, seed))
        .collect::<Result<_>>()?;

    let n = data.len();
    let mut fit = NuisanceFit {
        mu0_hat: vec![0.0; n],
        mu1_hat: vec![0.0; n],
        eta_hat: vec![0.0; n],
        pi_hat: vec![0.0; n],
        kappa_hat: vec![0.0; n],
        nu_hat: vec![0.0; n],
    };
    for fp in per_fold {
        for (k, &i) in fp.rows.iter().enumerate() {
            let pi = clip_probability(fp.pi[k], PROPENSITY_CLIP);
            let kappa = match &fp.kappa {
                Some(kappa) => clip_probability(kappa[k], PROPENSITY_CLIP),
                None => 1.0 - pi,
            };
            fit.mu0_hat[i] = fp.mu0[k];
            fit.mu1_hat[i] = fp.mu1[k];
            fit.eta_hat[i] = fp.eta[k];
            fit.pi_hat[i] = pi;
            fit.kappa_hat[i] = kappa;
            fit.nu_hat[i] = pi * kappa;
        }
    }
    Ok(fit)
}

/// Plug-in outcome models for the two arms, fit on all rows of `data`.
pub(crate) fn fit_arm_models(
    data: &Dataset,
    gbt_config: &GbtConfig,
    seed: u64,
) -> Result<(gbt::GbtModel, gbt::GbtModel)> {
    let treated: Vec<usize> = (0..data.len()).filter(|&i| data.treated(i)).collect();
    let control: Vec<usize> = (0..data.len()).filter(|&i| !data.treated(i)).collect();
    require_rows(0, "mu1", "treated", &treated)?;
    require_rows(0, "mu0", "control", &control)?;
    let t = data.select(&treated);
    let c = data.select(&control);
    let m1 = gbt::fit(
        t.x.view(),
        t.y.as_slice().unwrap(),
        &vec![1.0; t.len()],
        gbt_config,
        derive_seed(seed, &[1]),
    )?;
    let m0 = gbt::fit(
        c.x.view(),
        c.y.as_slice().unwrap(),
        &vec![1.0; c.len()],
        gbt_config,
        derive_seed(seed, &[0]),
    )?;
    Ok((m0, m1))
}
