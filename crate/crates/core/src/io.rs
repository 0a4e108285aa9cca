//! CSV readers and writers.
//!
//! All files are UTF-8 with LF line endings and a mandatory header row.
//! Floats are written with Rust's shortest round-trip formatting, so a file
//! read back reproduces the in-memory values bit for bit.

use std::fmt::Write as _;
use std::io::Read;

use ndarray::{Array1, Array2, ArrayView2};

use crate::crossfit::NuisanceFit;
use crate::error::{CateError, Result};
use crate::sim::Dataset;

pub const NUISANCE_HEADER: &str = "pi_hat,kappa_hat,eta_hat,mu0_hat,mu1_hat,nu_hat";

fn covariate_names(d: usize) -> impl Iterator<Item = String> {
    (1..=d).map(|j| format!("x{j}"))
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        write!(out, "{v}").expect("writing to a String cannot fail");
    }
    out.push('\n');
}

pub fn dataset_to_csv(data: &Dataset) -> String {
    let mut out = String::new();
    let header: Vec<String> = covariate_names(data.dim())
        .chain(["a".to_string(), "y".to_string()])
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in data.x.rows().into_iter().enumerate() {
        push_row(&mut out, row.iter().copied().chain([data.a[i], data.y[i]]));
    }
    out
}

fn parse_field(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| CateError::Parse(format!("line {line}: cannot parse {field:?} as a number")))
}

/// Reads a dataset CSV with header `x1..xd,a,y`.
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = headers.len();
    if cols < 3 {
        return Err(CateError::Parse(
            "dataset header needs at least one covariate plus a and y".into(),
        ));
    }
    let d = cols - 2;
    let expected: Vec<String> = covariate_names(d).chain(["a".into(), "y".into()]).collect();
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != expected {
        return Err(CateError::Parse(format!(
            "unexpected dataset header {:?}, expected {}",
            found.join(","),
            expected.join(",")
        )));
    }
    let mut xs = Vec::new();
    let mut a = Vec::new();
    let mut y = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let line = k + 2;
        if record.len() != cols {
            return Err(CateError::Parse(format!(
                "line {line}: expected {cols} fields, found {}",
                record.len()
            )));
        }
        for j in 0..d {
            xs.push(parse_field(&record[j], line)?);
        }
        a.push(parse_field(&record[d], line)?);
        y.push(parse_field(&record[d + 1], line)?);
    }
    let n = a.len();
    let x = Array2::from_shape_vec((n, d), xs).map_err(|e| CateError::Parse(e.to_string()))?;
    Dataset::new(x, Array1::from(a), Array1::from(y))
}

pub fn nuisances_to_csv(fit: &NuisanceFit) -> String {
    let mut out = String::from(NUISANCE_HEADER);
    out.push('\n');
    for i in 0..fit.len() {
        push_row(
            &mut out,
            [
                fit.pi_hat[i],
                fit.kappa_hat[i],
                fit.eta_hat[i],
                fit.mu0_hat[i],
                fit.mu1_hat[i],
                fit.nu_hat[i],
            ],
        );
    }
    out
}

/// Prediction CSV with header `x1..xd,tau_hat[,tau_true]`.
pub fn predictions_to_csv(x: ArrayView2<f64>, tau_hat: &[f64], tau_true: Option<&[f64]>) -> Result<String> {
    if tau_hat.len() != x.nrows() {
        return Err(CateError::DimensionMismatch {
            expected: x.nrows(),
            found: tau_hat.len(),
        });
    }
    if let Some(t) = tau_true {
        if t.len() != x.nrows() {
            return Err(CateError::DimensionMismatch {
                expected: x.nrows(),
                found: t.len(),
            });
        }
    }
    let mut header: Vec<String> = covariate_names(x.ncols()).collect();
    header.push("tau_hat".into());
    if tau_true.is_some() {
        header.push("tau_true".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, row) in x.rows().into_iter().enumerate() {
        let extra = tau_true.map(|t| t[i]);
        push_row(&mut out, row.iter().copied().chain([tau_hat[i]]).chain(extra));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_dataset, SimSetting};

    #[test]
    fn dataset_round_trip_is_lossless() {
        let data = generate_dataset(SimSetting::B, 50, 11).unwrap();
        let text = dataset_to_csv(&data);
        assert!(text.starts_with("x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,a,y\n"));
        assert!(!text.contains('\r'));
        let back = read_dataset_csv(text.as_bytes()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(read_dataset_csv("x1,b,y\n1,0,2\n".as_bytes()).is_err());
        assert!(read_dataset_csv("x1,a,y\n1,0\n".as_bytes()).is_err());
        assert!(read_dataset_csv("x1,a,y\n1,zero,2\n".as_bytes()).is_err());
        assert!(read_dataset_csv("x1,a,y\n1,0.5,2\n".as_bytes()).is_err());
    }

    #[test]
    fn prediction_header() {
        let x = Array2::from_shape_vec((2, 1), vec![0.25, 0.75]).unwrap();
        let text = predictions_to_csv(x.view(), &[0.5, -1.0], Some(&[0.0, 0.0])).unwrap();
        assert_eq!(text, "x1,tau_hat,tau_true\n0.25,0.5,0\n0.75,-1,0\n");
        assert!(predictions_to_csv(x.view(), &[0.5], None).is_err());
    }

    #[test]
    fn nuisance_header() {
        let fit = NuisanceFit::from_values(&[crate::sim::NuisanceValues::from_eta(0.5, 1.0, 0.0)]);
        let text = nuisances_to_csv(&fit);
        assert_eq!(text, format!("{NUISANCE_HEADER}\n0.5,0.5,1,1,1,0.25\n"));
    }
}
