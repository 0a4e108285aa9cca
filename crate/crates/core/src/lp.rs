//! Weighted local-polynomial regression at a single target point.
//!
//! For a target `x_new` the smoother forms
//!
//! ```text
//! K(x) = kern(|x - x_new| / h) / h^d
//! Q    = (1/n) sum_i b(X_i) nu(X_i) K(X_i) b(X_i)^T
//! w(x) = b(x_new)^T Q^{-1} b(x) K(x) nu(x)
//! tau(x_new) = (1/n) sum_i w(X_i) f_i
//! ```
//!
//! where `b` is the total-degree monomial basis in `(x - x_new) / h` and
//! `nu` is a vector of positive stabilizing weights. Because `Q` is built from
//! the same `nu` that enters `w`, the smoother reproduces every polynomial of
//! degree at most the basis order, whatever positive `nu` is used.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::ArrayView2;

use crate::error::{CateError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    /// `0.5 * 1(|u| <= 1)`.
    Box,
    /// `0.75 * (1 - u^2) * 1(|u| <= 1)`.
    Epanechnikov,
}

impl KernelKind {
    pub fn eval(self, u: f64) -> f64 {
        let u = u.abs();
        if u > 1.0 {
            return 0.0;
        }
        match self {
            KernelKind::Box => 0.5,
            KernelKind::Epanechnikov => 0.75 * (1.0 - u * u),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Box => "box",
            KernelKind::Epanechnikov => "epanechnikov",
        })
    }
}

impl FromStr for KernelKind {
    type Err = CateError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "box" | "uniform" => Ok(KernelKind::Box),
            "epanechnikov" | "epa" => Ok(KernelKind::Epanechnikov),
            other => Err(CateError::Parse(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpConfig {
    pub h: f64,
    pub kernel: KernelKind,
    pub degree: usize,
    /// Smallest admissible eigenvalue of `Q`; `None` means `1e-10 * L`.
    pub lambda_min_tol: Option<f64>,
}

impl LpConfig {
    pub fn new(h: f64, kernel: KernelKind, degree: usize) -> Self {
        LpConfig {
            h,
            kernel,
            degree,
            lambda_min_tol: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(CateError::InvalidParameter(format!(
                "bandwidth must be positive, got {}",
                self.h
            )));
        }
        if let Some(tol) = self.lambda_min_tol {
            if !(tol > 0.0) {
                return Err(CateError::InvalidParameter(format!(
                    "lambda_min_tol must be positive, got {tol}"
                )));
            }
        }
        Ok(())
    }

    fn tolerance(&self, basis_len: usize) -> f64 {
        self.lambda_min_tol.unwrap_or(1e-10 * basis_len as f64)
    }
}

/// Bandwidth rule `n^(-1 / (2 + d * degree + d))`.
pub fn default_bandwidth(n: usize, d: usize, degree: usize) -> f64 {
    (n as f64).powf(-1.0 / (2 + d * degree + d) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpFitDiagnostics {
    pub lambda_min: f64,
    pub n_in_window: usize,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn kernel_value(cfg: &LpConfig, x: &[f64], x_new: &[f64]) -> Result<f64> {
    cfg.validate()?;
    if x.len() != x_new.len() {
        return Err(CateError::DimensionMismatch {
            expected: x_new.len(),
            found: x.len(),
        });
    }
    Ok(kernel_unchecked(cfg, x, x_new))
}

fn kernel_unchecked(cfg: &LpConfig, x: &[f64], x_new: &[f64]) -> f64 {
    let d = x_new.len() as i32;
    cfg.kernel.eval(euclidean(x, x_new) / cfg.h) / cfg.h.powi(d)
}

/// `C(degree + d, d)`.
pub fn basis_len(degree: usize, d: usize) -> usize {
    (1..=d).fold(1usize, |acc, k| acc * (degree + k) / k)
}

/// Total-degree monomial basis, ordered by degree and then lexicographically
/// by exponent vector (descending in the first coordinate).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyBasis {
    exponents: Vec<Vec<u32>>,
}

impl PolyBasis {
    pub fn new(degree: usize, d: usize) -> Self {
        let mut exponents = Vec::with_capacity(basis_len(degree, d));
        for total in 0..=degree as u32 {
            let mut current = vec![0u32; d];
            push_compositions(total, 0, &mut current, &mut exponents);
        }
        PolyBasis { exponents }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn eval(&self, u: &[f64]) -> Vec<f64> {
        self.exponents
            .iter()
            .map(|e| e.iter().zip(u).map(|(&p, &v)| v.powi(p as i32)).product())
            .collect()
    }
}

fn push_compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    if current.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for p in (0..=remaining).rev() {
        current[pos] = p;
        push_compositions(remaining - p, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// Basis evaluated at `x` after centering at `x_new` and scaling by `h`.
pub fn basis(x: &[f64], x_new: &[f64], h: f64, degree: usize) -> Vec<f64> {
    let u: Vec<f64> = x.iter().zip(x_new).map(|(a, b)| (a - b) / h).collect();
    PolyBasis::new(degree, x.len()).eval(&u)
}

/// Smoother weights `w(X_i)` for target `x_new`.
pub fn lp_weights(
    x_new: &[f64],
    x: ArrayView2<f64>,
    nu_hat: &[f64],
    cfg: &LpConfig,
) -> Result<(Vec<f64>, LpFitDiagnostics)> {
    cfg.validate()?;
    let (n, d) = x.dim();
    if x_new.len() != d {
        return Err(CateError::DimensionMismatch {
            expected: d,
            found: x_new.len(),
        });
    }
    if nu_hat.len() != n {
        return Err(CateError::DimensionMismatch {
            expected: n,
            found: nu_hat.len(),
        });
    }
    if nu_hat.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(CateError::InvalidParameter(
            "stabilizing weights must be finite and nonnegative".into(),
        ));
    }
    let poly = PolyBasis::new(cfg.degree, d);
    let l = poly.len();
    let tol = cfg.tolerance(l);

    let mut row = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut local: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    let mut q = DMatrix::<f64>::zeros(l, l);
    for (i, xr) in x.rows().into_iter().enumerate() {
        row.iter_mut().zip(xr.iter()).for_each(|(dst, &v)| *dst = v);
        let k = kernel_unchecked(cfg, &row, x_new);
        if k <= 0.0 {
            continue;
        }
        for j in 0..d {
            u[j] = (row[j] - x_new[j]) / cfg.h;
        }
        let b = poly.eval(&u);
        let scale = k * nu_hat[i];
        for r in 0..l {
            for c in 0..=r {
                q[(r, c)] += b[r] * b[c] * scale;
            }
        }
        local.push((i, b, scale));
    }
    for r in 0..l {
        for c in 0..r {
            q[(c, r)] = q[(r, c)];
        }
    }
    q /= n as f64;
    let n_in_window = local.len();

    let lambda_min = SymmetricEigen::new(q.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(lambda_min >= tol) {
        return Err(CateError::IllConditioned {
            lambda_min,
            tol,
            n_in_window,
        });
    }

    let mut target = DVector::<f64>::zeros(l);
    target[0] = 1.0; // b(x_new) with the centred basis
    let solved = q
        .cholesky()
        .map(|c| c.solve(&target))
        .ok_or(CateError::IllConditioned {
            lambda_min,
            tol,
            n_in_window,
        })?;

    let mut weights = vec![0.0; n];
    for (i, b, scale) in local {
        let proj: f64 = b.iter().zip(solved.iter()).map(|(bi, si)| bi * si).sum();
        weights[i] = proj * scale;
    }
    Ok((
        weights,
        LpFitDiagnostics {
            lambda_min,
            n_in_window,
        },
    ))
}

/// `(1/n) sum_i w(X_i) pseudo_i`.
pub fn lp_estimate(
    x_new: &[f64],
    x: ArrayView2<f64>,
    pseudo: &[f64],
    nu_hat: &[f64],
    cfg: &LpConfig,
) -> Result<f64> {
    if pseudo.len() != x.nrows() {
        return Err(CateError::DimensionMismatch {
            expected: x.nrows(),
            found: pseudo.len(),
        });
    }
    let (weights, _) = lp_weights(x_new, x, nu_hat, cfg)?;
    let n = x.nrows() as f64;
    Ok(weights.iter().zip(pseudo).map(|(w, f)| w * f).sum::<f64>() / n)
}

/// A polynomial in the raw covariates: `sum_t coef_t * prod_j x_j^{e_tj}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub terms: Vec<(Vec<u32>, f64)>,
}

impl Polynomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product::<f64>())
            .sum()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(e, _)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }
}

/// Largest `|(1/n) sum_i w(X_i) f(X_i) - f(x_new)|` over the target points.
pub fn reproducing_check(
    cfg: &LpConfig,
    poly: &Polynomial,
    x: ArrayView2<f64>,
    nu_hat: &[f64],
    targets: ArrayView2<f64>,
) -> Result<f64> {
    let values: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| poly.eval(&r.to_vec()))
        .collect();
    let mut worst: f64 = 0.0;
    for t in targets.rows() {
        let t = t.to_vec();
        let fitted = lp_estimate(&t, x, &values, nu_hat, cfg)?;
        worst = worst.max((fitted - poly.eval(&t)).abs());
    }
    Ok(worst)
}
