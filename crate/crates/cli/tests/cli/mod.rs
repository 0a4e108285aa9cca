use std::process::{Command, Output};

fn cate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cate"))
        .args(args)
        .output()
        .expect("failed to launch the cate binary")
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = cate(&["simulate", "--setting", "F", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cate(&["bench", "--split", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_bench_flags() {
    let out = cate(&["bench", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in [
        "--settings", "--n", "--iterations", "--seed", "--learners", "--weights", "--folds", "--split",
        "--gbt-trees", "--gbt-depth", "--gbt-lr", "--out", "--oracle-nuisances", "--test-size",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn verify_succeeds() {
    let out = cate(&["verify", "--mc-draws", "200000"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("0 failed"));
}

#[test]
fn simulate_then_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let pred = dir.path().join("pred.csv");
    let nuis = dir.path().join("nuis.csv");
    let out = cate(&["simulate", "--setting", "C", "--n", "120", "--seed", "7", "--out", data.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&data).unwrap();
    assert!(text.starts_with("x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,a,y\n"));
    assert_eq!(text.lines().count(), 121);

    let out = cate(&[
        "estimate", "--input", data.to_str().unwrap(), "--out", pred.to_str().unwrap(), "--setting", "C",
        "--folds", "3", "--gbt-trees", "10", "--nuisance-out", nuis.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pred_text = std::fs::read_to_string(&pred).unwrap();
    assert!(pred_text.starts_with("x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,tau_hat,tau_true\n"));
    assert_eq!(pred_text.lines().count(), 121);
    // Covariates pass through unchanged.
    for (a, b) in text.lines().skip(1).zip(pred_text.lines().skip(1)) {
        let xa: Vec<&str> = a.split(',').take(10).collect();
        let xb: Vec<&str> = b.split(',').take(10).collect();
        assert_eq!(xa, xb);
    }
    let nuis_text = std::fs::read_to_string(&nuis).unwrap();
    assert!(nuis_text.starts_with("pi_hat,kappa_hat,eta_hat,mu0_hat,mu1_hat,nu_hat\n"));
}

#[test]
fn estimate_rejects_oracle_without_setting() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    assert!(cate(&["simulate", "--setting", "F", "--n", "50", "--out", data.to_str().unwrap()]).status.success());
    let out = cate(&["estimate", "--input", data.to_str().unwrap(), "--learner", "OR"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_row_count_matches_grid() {
    let dir = tempfile::tempdir().unwrap();
    let res = dir.path().join("res.csv");
    let summary = dir.path().join("summary.csv");
    let out = cate(&[
        "bench", "--settings", "A,B,C,D,E,F", "--iterations", "2", "--n", "120", "--seed", "1", "--learners", "DR,T",
        "--folds", "3", "--gbt-trees", "5", "--test-size", "20", "--out", res.to_str().unwrap(), "--summary-out",
        summary.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&res).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("setting,learner,weights,iteration,n,rmse,error"));
    // DR with two weight schemes plus the T-learner.
    assert_eq!(lines.count(), 6 * 3 * 2);
    assert_eq!(std::fs::read_to_string(&summary).unwrap().lines().count(), 1 + 6 * 3);
}

#[test]
fn compare_weights_writes_plot_data() {
    let out = cate(&["compare-weights", "--n", "300", "--grid", "25"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("x1,tau_true,tau_hat_weighted,tau_hat_unweighted\n"));
    assert_eq!(text.lines().count(), 26);
}
