//! Numerical self-checks run by the `verify` command.

use std::fmt;

use ndarray::Array2;
use rand::Rng;

use crate::crossfit::NuisanceFit;
use crate::error::Result;
use crate::learners::{pseudo_outcomes_and_weights, rlearner_linear_direct, weighted_linear_fit};
use crate::lp::{reproducing_check, KernelKind, LpConfig, PolyBasis, Polynomial};
use crate::pseudo::{
    bias_identity_check, monte_carlo_null_variance, theoretical_variance, EstimateLaw, EstimateLaws,
    PseudoOutcomeKind, WeightScheme,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sim::{generate_dataset, NuisanceValues, SimSetting};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} [{}] {}: {}", self.suite, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            mc_draws: 1_000_000,
            seed: 20_240_601,
        }
    }
}

fn outcome(suite: &'static str, name: String, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        suite,
        name,
        passed,
        detail,
    }
}

/// Monte-Carlo variances of the U, DR and oracle-R pseudo-outcomes against
/// their closed forms, within 2% relative error.
pub fn variance_suite(opts: &VerifyOptions) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (k, kind) in [PseudoOutcomeKind::U, PseudoOutcomeKind::DR, PseudoOutcomeKind::OracleR]
        .into_iter()
        .enumerate()
    {
        for (j, pi) in [0.1, 0.3, 0.5].into_iter().enumerate() {
            let theory = theoretical_variance(kind, pi, 1.0)?;
            let mc = monte_carlo_null_variance(kind, pi, opts.mc_draws, derive_seed(opts.seed, &[1, k as u64, j as u64]))?;
            let rel = (mc - theory).abs() / theory;
            out.push(outcome(
                "variance",
                format!("{kind} pi={pi}"),
                rel < 0.02,
                format!("mc={mc:.5} theory={theory:.5} rel_err={rel:.4}"),
            ));
        }
    }
    for kind in [PseudoOutcomeKind::U, PseudoOutcomeKind::DR] {
        let v = theoretical_variance(kind, 0.5, 1.0)?;
        out.push(outcome("variance", format!("{kind} pi=0.5 closed form"), v == 4.0, format!("value={v}")));
    }
    Ok(out)
}

/// The product-of-biases identity for the weighted arm-1 term.
pub fn bias_suite(opts: &VerifyOptions) -> Result<Vec<CheckOutcome>> {
    let truth = NuisanceValues::from_arms(0.5, 0.0, 1.0);
    let cases = [
        (
            "deterministic errors",
            EstimateLaws {
                kappa_hat: EstimateLaw::Constant(0.5),
                pi_hat: EstimateLaw::Constant(0.4),
                mu1_hat: EstimateLaw::Constant(1.2),
            },
        ),
        (
            "mean-zero errors",
            EstimateLaws {
                kappa_hat: EstimateLaw::Uniform { low: 0.3, high: 0.7 },
                pi_hat: EstimateLaw::shifted(0.5, &[-0.1, 0.1]),
                mu1_hat: EstimateLaw::Normal { mean: 1.0, sd: 0.3 },
            },
        ),
        (
            "random errors with bias",
            EstimateLaws {
                kappa_hat: EstimateLaw::Uniform { low: 0.4, high: 0.8 },
                pi_hat: EstimateLaw::shifted(0.45, &[-0.05, 0.05]),
                mu1_hat: EstimateLaw::Normal { mean: 0.7, sd: 0.2 },
            },
        ),
    ];
    let mut out = Vec::new();
    for (c, (name, laws)) in cases.into_iter().enumerate() {
        let report = bias_identity_check(&truth, &laws, 1.0, opts.mc_draws, derive_seed(opts.seed, &[2, c as u64]))?;
        let z = report.z_score();
        out.push(outcome(
            "bias",
            name.to_string(),
            z.abs() < 3.0,
            format!(
                "mc={:.6} closed={:.6} se={:.6} z={z:.2}",
                report.lhs_mc, report.rhs_closed, report.mc_stderr
            ),
        ));
    }
    Ok(out)
}

/// Local-polynomial weights reproduce polynomials up to the basis degree
/// for arbitrary positive weights.
pub fn reproducing_suite(opts: &VerifyOptions, replicates: usize) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for d in 1..=2usize {
        for degree in 0..=2usize {
            let mut rng = rng_from_seed(derive_seed(opts.seed, &[3, d as u64, degree as u64]));
            let n = 300;
            let x = Array2::from_shape_simple_fn((n, d), || rng.random::<f64>());
            let targets = Array2::from_shape_fn((3, d), |(i, _)| 0.3 + 0.2 * i as f64);
            let cfg = LpConfig::new(0.45, KernelKind::Epanechnikov, degree);
            let basis = PolyBasis::new(degree, d);
            let mut worst: f64 = 0.0;
            for _ in 0..replicates {
                let nu: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
                let poly = Polynomial {
                    terms: basis
                        .exponents()
                        .iter()
                        .map(|e| (e.clone(), rng.random_range(-2.0..2.0)))
                        .collect(),
                };
                worst = worst.max(reproducing_check(&cfg, &poly, x.view(), &nu, targets.view())?);
            }
            out.push(outcome(
                "reproducing",
                format!("d={d} degree={degree}"),
                worst < 1e-8,
                format!("max_residual={worst:.3e} over {replicates} weight vectors"),
            ));
        }
    }
    Ok(out)
}

/// Weighted-U with residual weights and a linear final stage equals the
/// direct residual-on-residual least squares fit.
pub fn equivalence_suite(opts: &VerifyOptions, datasets: usize) -> Result<Vec<CheckOutcome>> {
    let mut worst: f64 = 0.0;
    for r in 0..datasets {
        let setting = SimSetting::ALL[r % SimSetting::ALL.len()];
        let seed = derive_seed(opts.seed, &[4, r as u64]);
        let data = generate_dataset(setting, 300, seed)?;
        let mut rng = rng_from_seed(derive_seed(seed, &[1]));
        let values: Vec<NuisanceValues> = (0..data.len())
            .map(|_| NuisanceValues::from_eta(rng.random_range(0.05..0.95), rng.random_range(-2.0..2.0), 0.0))
            .collect();
        let fit = NuisanceFit::from_values(&values);
        let (pseudo, w) = pseudo_outcomes_and_weights(PseudoOutcomeKind::U, WeightScheme::RLearner, &data, &fit)?;
        let weighted = weighted_linear_fit(data.x.view(), &pseudo, &w)?;
        let direct = rlearner_linear_direct(&data, &fit.eta_hat, &fit.pi_hat)?;
        for (a, b) in weighted.iter().zip(&direct) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(vec![outcome(
        "equivalence",
        format!("{datasets} random datasets"),
        worst < 1e-8,
        format!("max_coefficient_gap={worst:.3e}"),
    )])
}

/// Every suite with its default size.
pub fn run_all(opts: &VerifyOptions) -> Result<Vec<CheckOutcome>> {
    let mut out = variance_suite(opts)?;
    out.extend(bias_suite(opts)?);
    out.extend(reproducing_suite(opts, 50)?);
    out.extend(equivalence_suite(opts, 20)?);
    Ok(out)
}
