//! Simulation settings A–F with exact ground truth for the effect and every
//! nuisance function.
//!
//! Each setting fixes a covariate law, the effect `tau(x)`, the marginal
//! outcome mean `eta(x) = E[Y | X = x]` and the propensity `pi(x)`. Arm means
//! follow from those three: `mu0 = eta - pi * tau`, `mu1 = mu0 + tau`.
//! Outcomes are drawn as `Y = mu_A(X) + eps` with standard normal noise.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CateError, Result};
use crate::rng::{derive_seed, rng_from_seed, SimRng};

/// One of the six simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SimSetting {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl SimSetting {
    pub const ALL: [SimSetting; 6] = [
        SimSetting::A,
        SimSetting::B,
        SimSetting::C,
        SimSetting::D,
        SimSetting::E,
        SimSetting::F,
    ];

    /// Covariate dimension: 10 for the multivariate designs, 1 otherwise.
    pub fn dim(self) -> usize {
        match self {
            SimSetting::A | SimSetting::B | SimSetting::C | SimSetting::D => 10,
            SimSetting::E | SimSetting::F => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SimSetting::A => "A",
            SimSetting::B => "B",
            SimSetting::C => "C",
            SimSetting::D => "D",
            SimSetting::E => "E",
            SimSetting::F => "F",
        }
    }

    pub(crate) fn index(self) -> u64 {
        self as u64
    }

    /// Draws one covariate value from the setting's per-coordinate law.
    fn draw_coordinate(self, rng: &mut SimRng) -> f64 {
        match self {
            SimSetting::A => rng.random::<f64>(),
            SimSetting::B | SimSetting::C | SimSetting::D => StandardNormal.sample(rng),
            SimSetting::E => rng.random_range(-1.0..1.0),
            SimSetting::F => rng.random_range(0.05..0.95),
        }
    }
}

impl fmt::Display for SimSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SimSetting {
    type Err = CateError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(SimSetting::A),
            "B" => Ok(SimSetting::B),
            "C" => Ok(SimSetting::C),
            "D" => Ok(SimSetting::D),
            "E" => Ok(SimSetting::E),
            "F" => Ok(SimSetting::F),
            other => Err(CateError::Parse(format!("unknown setting '{other}'"))),
        }
    }
}

/// Observed sample `(X, A, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub a: Array1<f64>,
    pub y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, a: Array1<f64>, y: Array1<f64>) -> Result<Self> {
        let n = x.nrows();
        if a.len() != n {
            return Err(CateError::DimensionMismatch {
                expected: n,
                found: a.len(),
            });
        }
        if y.len() != n {
            return Err(CateError::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CateError::NonFinite("covariates"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(CateError::NonFinite("outcomes"));
        }
        if a.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(CateError::InvalidParameter(
                "treatment values must be 0 or 1".into(),
            ));
        }
        Ok(Dataset { x, a, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn treated(&self, i: usize) -> bool {
        self.a[i] == 1.0
    }

    /// Rows `rows` in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            a: self.a.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
        }
    }
}

/// Pointwise values of the nuisance functions at one covariate value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuisanceValues {
    pub mu0: f64,
    pub mu1: f64,
    pub eta: f64,
    pub pi: f64,
    pub kappa: f64,
    pub nu: f64,
}

impl NuisanceValues {
    /// Builds the full vector from the propensity, the marginal outcome mean
    /// and the effect.
    pub fn from_eta(pi: f64, eta: f64, tau: f64) -> Self {
        let mu0 = eta - pi * tau;
        let kappa = 1.0 - pi;
        NuisanceValues {
            mu0,
            mu1: mu0 + tau,
            eta,
            pi,
            kappa,
            nu: pi * kappa,
        }
    }

    /// Builds the full vector from the propensity and the two arm means.
    pub fn from_arms(pi: f64, mu0: f64, mu1: f64) -> Self {
        let kappa = 1.0 - pi;
        NuisanceValues {
            mu0,
            mu1,
            eta: pi * mu1 + kappa * mu0,
            pi,
            kappa,
            nu: pi * kappa,
        }
    }

    pub fn tau(&self) -> f64 {
        self.mu1 - self.mu0
    }

    /// Checks the relations that hold for true nuisance functions.
    pub fn is_consistent(&self) -> bool {
        self.kappa == 1.0 - self.pi
            && self.nu == self.pi * self.kappa
            && self.pi > 0.0
            && self.pi < 1.0
            && (self.eta - (self.pi * self.mu1 + self.kappa * self.mu0)).abs() <= 1e-12
    }
}

/// `min(max(a, b), 1 - a)` for `a` in `(0, 0.5)`.
pub fn trim(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a < 0.5) {
        return Err(CateError::InvalidParameter(format!(
            "trim level must lie in (0, 0.5), got {a}"
        )));
    }
    Ok(b.max(a).min(1.0 - a))
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn positive_part(z: f64) -> f64 {
    z.max(0.0)
}

fn check_dim(setting: SimSetting, x: &[f64]) -> Result<()> {
    if x.len() != setting.dim() {
        return Err(CateError::DimensionMismatch {
            expected: setting.dim(),
            found: x.len(),
        });
    }
    Ok(())
}

fn tau_unchecked(setting: SimSetting, x: &[f64]) -> f64 {
    match setting {
        SimSetting::A => 0.5 * x[0] + 0.5 * x[1],
        SimSetting::B => softplus(x[1]) + x[0],
        SimSetting::C => 1.0,
        SimSetting::D => positive_part(x[0] + x[1] + x[2]) - positive_part(x[3] + x[4]),
        SimSetting::E | SimSetting::F => 0.0,
    }
}

fn eta_unchecked(setting: SimSetting, x: &[f64]) -> f64 {
    match setting {
        SimSetting::A => (PI * x[0] * x[1]).sin() + 2.0 * (x[2] - 0.5).powi(2),
        SimSetting::B => 0.0_f64.max(x[0] + x[1]).max(x[2]) + positive_part(x[3] + x[4]),
        SimSetting::C => 2.0 * softplus(x[0] + x[1] + x[2]),
        SimSetting::D => positive_part(x[0] + x[1] + x[2]) + 0.5 * positive_part(x[3] + x[4]),
        SimSetting::E => {
            // Indicators as written: the points 0 and 1/2 fall in no piece.
            let x1 = x[0];
            let mut eta = 0.0;
            if x1 <= -0.5 {
                eta += (x1 + 2.0).powi(2) / 2.0;
            }
            if x1 > 0.5 {
                eta += x1 + 0.125;
            }
            if -0.5 < x1 && x1 < 0.0 {
                eta += x1 / 2.0 + 0.875;
            }
            if 0.0 < x1 && x1 < 0.5 {
                eta += -5.0 * (x1 - 0.2).powi(2) + 1.075;
            }
            eta
        }
        SimSetting::F => 1.0,
    }
}

fn pi_unchecked(setting: SimSetting, x: &[f64]) -> f64 {
    match setting {
        SimSetting::A => (PI * x[0] * x[1]).sin().clamp(0.1, 0.9),
        SimSetting::B => 0.5,
        SimSetting::C => 1.0 / (1.0 + (x[1] + x[2]).exp()),
        SimSetting::D => 1.0 / (1.0 + (-x[0]).exp() + (-x[1]).exp()),
        SimSetting::E => 0.1 + positive_part(0.8 * x[0]),
        SimSetting::F => x[0],
    }
}

/// The true conditional average treatment effect at `x`.
pub fn true_tau(setting: SimSetting, x: &[f64]) -> Result<f64> {
    check_dim(setting, x)?;
    Ok(tau_unchecked(setting, x))
}

/// All true nuisance values at `x`.
pub fn true_nuisance(setting: SimSetting, x: &[f64]) -> Result<NuisanceValues> {
    check_dim(setting, x)?;
    Ok(nuisance_unchecked(setting, x))
}

fn nuisance_unchecked(setting: SimSetting, x: &[f64]) -> NuisanceValues {
    NuisanceValues::from_eta(
        pi_unchecked(setting, x),
        eta_unchecked(setting, x),
        tau_unchecked(setting, x),
    )
}

fn row_slice<'a>(row: ArrayView1<'a, f64>, buf: &'a mut Vec<f64>) -> &'a [f64] {
    buf.clear();
    buf.extend(row.iter().copied());
    buf.as_slice()
}

/// True effect at every row of `x`.
pub fn true_tau_rows(setting: SimSetting, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    if x.ncols() != setting.dim() {
        return Err(CateError::DimensionMismatch {
            expected: setting.dim(),
            found: x.ncols(),
        });
    }
    let mut buf = Vec::with_capacity(x.ncols());
    Ok(x.rows()
        .into_iter()
        .map(|row| tau_unchecked(setting, row_slice(row, &mut buf)))
        .collect())
}

/// True nuisance values at every row of `x`.
pub fn true_nuisance_rows(setting: SimSetting, x: ArrayView2<f64>) -> Result<Vec<NuisanceValues>> {
    if x.ncols() != setting.dim() {
        return Err(CateError::DimensionMismatch {
            expected: setting.dim(),
            found: x.ncols(),
        });
    }
    let mut buf = Vec::with_capacity(x.ncols());
    Ok(x.rows()
        .into_iter()
        .map(|row| nuisance_unchecked(setting, row_slice(row, &mut buf)))
        .collect())
}

/// Draws `m` covariate rows from the setting's law.
pub fn sample_covariates(setting: SimSetting, m: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    let d = setting.dim();
    Array2::from_shape_fn((m, d), |_| setting.draw_coordinate(&mut rng))
}

/// Generates `n` i.i.d. observations.
///
/// Draws proceed row by row: the `d` covariates, then a uniform for the
/// treatment (`A = 1` iff `U < pi(X)`), then the standard normal noise.
pub fn generate_dataset(setting: SimSetting, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(CateError::InvalidParameter("n must be at least 1".into()));
    }
    let d = setting.dim();
    let mut rng = rng_from_seed(derive_seed(seed, &[setting.index()]));
    let mut x = Array2::zeros((n, d));
    let mut a = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    let mut row = vec![0.0; d];
    for i in 0..n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = setting.draw_coordinate(&mut rng);
            x[[i, j]] = *v;
        }
        let nv = nuisance_unchecked(setting, &row);
        let u: f64 = rng.random();
        let treated = u < nv.pi;
        let eps: f64 = StandardNormal.sample(&mut rng);
        a[i] = if treated { 1.0 } else { 0.0 };
        y[i] = if treated { nv.mu1 } else { nv.mu0 } + eps;
    }
    Dataset::new(x, a, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trim_examples() {
        assert_eq!(trim(0.1, 0.03).unwrap(), 0.1);
        assert_eq!(trim(0.1, 0.95).unwrap(), 0.9);
        assert_eq!(trim(0.1, 0.5).unwrap(), 0.5);
        assert!(trim(0.5, 0.3).is_err());
        assert!(trim(0.0, 0.3).is_err());
        assert!(trim(-0.1, 0.3).is_err());
    }

    #[test]
    fn tau_examples() {
        assert_eq!(true_tau(SimSetting::C, &[0.3; 10]).unwrap(), 1.0);
        assert_eq!(true_tau(SimSetting::F, &[0.3]).unwrap(), 0.0);
        let mut x = [0.0; 10];
        x[0] = 0.4;
        x[1] = 0.6;
        assert!((true_tau(SimSetting::A, &x).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            true_tau(SimSetting::A, &[0.1]),
            Err(CateError::DimensionMismatch { expected: 10, found: 1 })
        ));
    }

    #[test]
    fn nuisance_examples() {
        let b = true_nuisance(SimSetting::B, &[1.3; 10]).unwrap();
        assert_eq!(b.pi, 0.5);

        let f = true_nuisance(SimSetting::F, &[0.25]).unwrap();
        assert_eq!(f.pi, 0.25);
        assert_eq!(f.eta, 1.0);
        assert_eq!(f.mu0, 1.0);
        assert_eq!(f.mu1, 1.0);

        let a = true_nuisance(SimSetting::A, &[0.0; 10]).unwrap();
        assert_eq!(a.pi, 0.1);
        assert!(true_nuisance(SimSetting::E, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn setting_e_pieces() {
        // Hand-evaluated at one point inside each piece.
        let eta = |x: f64| true_nuisance(SimSetting::E, &[x]).unwrap().eta;
        assert!((eta(-0.75) - 0.78125).abs() < 1e-12);
        assert!((eta(-0.25) - 0.75).abs() < 1e-12);
        assert!((eta(0.2) - 1.075).abs() < 1e-12);
        assert!((eta(0.75) - 0.875).abs() < 1e-12);
        assert_eq!(eta(0.0), 0.0);
        assert_eq!(eta(0.5), 0.0);
        let pi = |x: f64| true_nuisance(SimSetting::E, &[x]).unwrap().pi;
        assert!((pi(-0.5) - 0.1).abs() < 1e-15);
        assert!((pi(1.0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn dims_match_labels() {
        for s in SimSetting::ALL {
            let expected = if matches!(s, SimSetting::E | SimSetting::F) { 1 } else { 10 };
            assert_eq!(s.dim(), expected);
            assert_eq!(s.label().parse::<SimSetting>().unwrap(), s);
        }
    }

    #[test]
    fn sampled_nuisances_are_consistent() {
        for s in SimSetting::ALL {
            let x = sample_covariates(s, 2000, 11);
            for nv in true_nuisance_rows(s, x.view()).unwrap() {
                assert!(nv.is_consistent(), "{s}: {nv:?}");
            }
            if s == SimSetting::A {
                for nv in true_nuisance_rows(s, x.view()).unwrap() {
                    assert!((0.1..=0.9).contains(&nv.pi));
                }
            }
            if s == SimSetting::F {
                for row in x.rows() {
                    let nv = true_nuisance(s, &[row[0]]).unwrap();
                    assert_eq!(nv.tau(), 0.0);
                    assert_eq!(nv.mu0, nv.eta);
                    assert_eq!(nv.mu1, nv.eta);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(SimSetting::D, 300, 5).unwrap();
        let b = generate_dataset(SimSetting::D, 300, 5).unwrap();
        let c = generate_dataset(SimSetting::D, 300, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(generate_dataset(SimSetting::D, 0, 5).is_err());
    }

    #[test]
    fn treatment_rates() {
        let f = generate_dataset(SimSetting::F, 100_000, 3).unwrap();
        assert!((f.a.mean().unwrap() - 0.5).abs() < 0.01);
        let b = generate_dataset(SimSetting::B, 100_000, 3).unwrap();
        assert!((b.a.mean().unwrap() - 0.5).abs() < 0.01);
    }

    #[test]
    fn setting_c_effect_by_regression_adjustment() {
        // Y - mu0(X) - A has mean zero when tau = 1, so the adjusted contrast
        // E[Y - mu0(X) | A=1] - E[Y - mu0(X) | A=0] estimates 1.
        let s = SimSetting::C;
        let data = generate_dataset(s, 100_000, 9).unwrap();
        let nv = true_nuisance_rows(s, data.x.view()).unwrap();
        let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..data.len() {
            let r = data.y[i] - nv[i].mu0;
            if data.treated(i) {
                s1 += r;
                n1 += 1.0;
            } else {
                s0 += r;
                n0 += 1.0;
            }
        }
        let contrast = s1 / n1 - s0 / n0;
        let se = (1.0 / n1 + 1.0 / n0).sqrt();
        assert!((contrast - 1.0).abs() < 4.0 * se, "contrast {contrast}");
    }
}
