//! Pseudo-outcome transformations, regression weights and their
//! conditional variances.
//!
//! Every pseudo-outcome `f(Z)` here satisfies `E[f(Z) | X] = tau(X)` when the
//! nuisance values are the true ones. They differ in conditional variance,
//! and the weight schemes are (approximate) inverses of those variances.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CateError, Result};
use crate::rng::rng_from_seed;
use crate::sim::NuisanceValues;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PseudoOutcomeKind {
    /// `(Y - eta) / (A - pi)`.
    U,
    /// Doubly robust `f_1 - f_0`.
    DR,
    /// Inverse-propensity weighted outcome.
    IPW,
    /// `(A - pi)(Y - eta) / (pi * kappa)` built from true nuisances.
    OracleR,
}

impl PseudoOutcomeKind {
    pub fn label(self) -> &'static str {
        match self {
            PseudoOutcomeKind::U => "U",
            PseudoOutcomeKind::DR => "DR",
            PseudoOutcomeKind::IPW => "IPW",
            PseudoOutcomeKind::OracleR => "OR",
        }
    }

    /// The weight scheme that approximately inverts this kind's variance.
    pub fn inverse_variance_weights(self) -> WeightScheme {
        match self {
            PseudoOutcomeKind::U => WeightScheme::RLearner,
            _ => WeightScheme::InverseVarianceDR,
        }
    }
}

impl fmt::Display for PseudoOutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PseudoOutcomeKind {
    type Err = CateError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "U" => Ok(PseudoOutcomeKind::U),
            "DR" => Ok(PseudoOutcomeKind::DR),
            "IPW" => Ok(PseudoOutcomeKind::IPW),
            "OR" | "ORACLER" | "ORACLE-R" => Ok(PseudoOutcomeKind::OracleR),
            other => Err(CateError::Parse(format!("unknown pseudo-outcome '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightScheme {
    Uniform,
    /// `(A - pi_hat)^2`.
    RLearner,
    /// `pi_hat * kappa_hat`.
    InverseVarianceDR,
}

impl WeightScheme {
    pub fn label(self) -> &'static str {
        match self {
            WeightScheme::Uniform => "uniform",
            WeightScheme::RLearner => "rlearner",
            WeightScheme::InverseVarianceDR => "ivw",
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for WeightScheme {
    type Err = CateError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "none" => Ok(WeightScheme::Uniform),
            "rlearner" | "r" => Ok(WeightScheme::RLearner),
            "ivw" | "ivw-dr" | "pikappa" => Ok(WeightScheme::InverseVarianceDR),
            other => Err(CateError::Parse(format!("unknown weight scheme '{other}'"))),
        }
    }
}

fn check_propensity(nv: &NuisanceValues) -> Result<()> {
    if !(nv.pi > 0.0 && nv.pi < 1.0) {
        return Err(CateError::InvalidParameter(format!(
            "propensity must lie in (0, 1), got {}",
            nv.pi
        )));
    }
    Ok(())
}

/// `f_a = mu_a + 1(A = a) (Y - mu_a) / (a pi + (1 - a) kappa)`.
pub fn dr_arm_term(arm: u8, a: f64, y: f64, nv: &NuisanceValues) -> f64 {
    let (mu, prob) = if arm == 1 {
        (nv.mu1, nv.pi)
    } else {
        (nv.mu0, nv.kappa)
    };
    let indicator = if (a == 1.0) == (arm == 1) { 1.0 } else { 0.0 };
    mu + indicator * (y - mu) / prob
}

pub fn pseudo_outcome(kind: PseudoOutcomeKind, a: f64, y: f64, nv: &NuisanceValues) -> Result<f64> {
    check_propensity(nv)?;
    let value = match kind {
        PseudoOutcomeKind::U => (y - nv.eta) / (a - nv.pi),
        PseudoOutcomeKind::DR => dr_arm_term(1, a, y, nv) - dr_arm_term(0, a, y, nv),
        PseudoOutcomeKind::IPW => a * y / nv.pi - (1.0 - a) * y / nv.kappa,
        PseudoOutcomeKind::OracleR => (a - nv.pi) * (y - nv.eta) / (nv.pi * nv.kappa),
    };
    Ok(value)
}

pub fn regression_weight(scheme: WeightScheme, a: f64, nv: &NuisanceValues) -> f64 {
    match scheme {
        WeightScheme::Uniform => 1.0,
        WeightScheme::RLearner => (a - nv.pi).powi(2),
        WeightScheme::InverseVarianceDR => nv.pi * nv.kappa,
    }
}

/// Conditional variance of a pseudo-outcome given `X` under a null effect
/// and homoskedastic noise with variance `sigma2`, with true nuisances.
pub fn theoretical_variance(kind: PseudoOutcomeKind, pi: f64, sigma2: f64) -> Result<f64> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(CateError::InvalidParameter(format!(
            "propensity must lie in (0, 1), got {pi}"
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(CateError::InvalidParameter(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    let kappa = 1.0 - pi;
    match kind {
        PseudoOutcomeKind::U => {
            Ok(sigma2 * (pi.powi(3) + kappa.powi(3)) / (kappa.powi(2) * pi.powi(2)))
        }
        PseudoOutcomeKind::DR | PseudoOutcomeKind::OracleR => Ok(sigma2 / (pi * kappa)),
        PseudoOutcomeKind::IPW => Err(CateError::UnsupportedKind("IPW")),
    }
}

/// Distribution of a nuisance estimate at a fixed covariate value.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimateLaw {
    Constant(f64),
    /// Uniform over a finite set of values.
    Discrete(Vec<f64>),
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
}

impl EstimateLaw {
    /// `center + delta`, `delta` uniform over `offsets`.
    pub fn shifted(center: f64, offsets: &[f64]) -> Self {
        EstimateLaw::Discrete(offsets.iter().map(|d| center + d).collect())
    }

    pub fn mean(&self) -> f64 {
        match self {
            EstimateLaw::Constant(v) => *v,
            EstimateLaw::Discrete(vs) => vs.iter().sum::<f64>() / vs.len() as f64,
            EstimateLaw::Uniform { low, high } => 0.5 * (low + high),
            EstimateLaw::Normal { mean, .. } => *mean,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            EstimateLaw::Constant(v) => v.is_finite(),
            EstimateLaw::Discrete(vs) => !vs.is_empty() && vs.iter().all(|v| v.is_finite()),
            EstimateLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            EstimateLaw::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && *sd >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CateError::InvalidParameter(format!("invalid law for {name}: {self:?}")))
        }
    }

    fn support_within(&self, low: f64, high: f64) -> bool {
        match self {
            EstimateLaw::Constant(v) => *v > low && *v < high,
            EstimateLaw::Discrete(vs) => vs.iter().all(|v| *v > low && *v < high),
            EstimateLaw::Uniform { low: a, high: b } => *a >= low && *b <= high && *a > low,
            EstimateLaw::Normal { .. } => false,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            EstimateLaw::Constant(v) => *v,
            EstimateLaw::Discrete(vs) => vs[rng.random_range(0..vs.len())],
            EstimateLaw::Uniform { low, high } => rng.random_range(*low..*high),
            EstimateLaw::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
        }
    }
}

/// Independent laws of `kappa_hat`, `pi_hat` and `mu1_hat` at one `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateLaws {
    pub kappa_hat: EstimateLaw,
    pub pi_hat: EstimateLaw,
    pub mu1_hat: EstimateLaw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasIdentityReport {
    /// Monte-Carlo mean of `kappa_hat * pi_hat * (f_1(theta_hat) - f_1(theta))`.
    pub lhs_mc: f64,
    /// `E(kappa_hat) * E(pi_hat - pi) * E(mu1_hat - mu1)`.
    pub rhs_closed: f64,
    pub mc_stderr: f64,
    pub n_draws: usize,
}

impl BiasIdentityReport {
    /// Distance between the two sides in units of Monte-Carlo standard error.
    pub fn z_score(&self) -> f64 {
        (self.lhs_mc - self.rhs_closed) / self.mc_stderr
    }
}

/// Checks the product-of-biases identity for the weighted arm-1 term at a
/// fixed covariate value.
///
/// Each draw samples `A ~ Bern(pi)`, `Y = mu_A + N(0, sigma^2)` and the
/// three estimates independently of each other and of `(A, Y)`.
pub fn bias_identity_check(
    truth: &NuisanceValues,
    laws: &EstimateLaws,
    sigma: f64,
    n_draws: usize,
    seed: u64,
) -> Result<BiasIdentityReport> {
    if n_draws < 2 {
        return Err(CateError::InvalidParameter(format!(
            "need at least 2 draws, got {n_draws}"
        )));
    }
    if !(truth.pi > 0.0 && truth.pi < 1.0) {
        return Err(CateError::InvalidParameter("true propensity outside (0, 1)".into()));
    }
    laws.kappa_hat.validate("kappa_hat")?;
    laws.pi_hat.validate("pi_hat")?;
    laws.mu1_hat.validate("mu1_hat")?;
    if !laws.pi_hat.support_within(0.0, 1.0) {
        return Err(CateError::InvalidParameter(
            "pi_hat law must be supported inside (0, 1)".into(),
        ));
    }

    let mut rng = rng_from_seed(seed);
    // Welford accumulation for the mean and its standard error.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..n_draws {
        let a = if rng.random::<f64>() < truth.pi { 1.0 } else { 0.0 };
        let eps: f64 = StandardNormal.sample(&mut rng);
        let y = if a == 1.0 { truth.mu1 } else { truth.mu0 } + sigma * eps;
        let kappa_hat = laws.kappa_hat.sample(&mut rng);
        let pi_hat = laws.pi_hat.sample(&mut rng);
        let mu1_hat = laws.mu1_hat.sample(&mut rng);

        let f1_hat = mu1_hat + a * (y - mu1_hat) / pi_hat;
        let f1 = truth.mu1 + a * (y - truth.mu1) / truth.pi;
        let term = kappa_hat * pi_hat * (f1_hat - f1);

        let delta = term - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (term - mean);
    }
    let variance = m2 / (n_draws - 1) as f64;
    let rhs_closed = laws.kappa_hat.mean()
        * (laws.pi_hat.mean() - truth.pi)
        * (laws.mu1_hat.mean() - truth.mu1);
    Ok(BiasIdentityReport {
        lhs_mc: mean,
        rhs_closed,
        mc_stderr: (variance / n_draws as f64).sqrt(),
        n_draws,
    })
}

/// Monte-Carlo variance of a pseudo-outcome under a null effect with unit
/// noise and true nuisances at propensity `pi`.
pub fn monte_carlo_null_variance(
    kind: PseudoOutcomeKind,
    pi: f64,
    n_draws: usize,
    seed: u64,
) -> Result<f64> {
    if n_draws < 2 {
        return Err(CateError::InvalidParameter("need at least 2 draws".into()));
    }
    let nv = NuisanceValues::from_arms(pi, 0.0, 0.0);
    let mut rng = rng_from_seed(seed);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..n_draws {
        let a = if rng.random::<f64>() < pi { 1.0 } else { 0.0 };
        let y: f64 = StandardNormal.sample(&mut rng);
        let f = pseudo_outcome(kind, a, y, &nv)?;
        let delta = f - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (f - mean);
    }
    Ok(m2 / (n_draws - 1) as f64)
}
