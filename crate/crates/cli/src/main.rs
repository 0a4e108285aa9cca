use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ivw_cate::bench::{run_benchmark, weighting_comparison, BenchConfig};
use ivw_cate::crossfit::SplitScheme;
use ivw_cate::gbt::GbtConfig;
use ivw_cate::io::{dataset_to_csv, nuisances_to_csv, predictions_to_csv, read_dataset_csv};
use ivw_cate::learners::{fit_predict, nuisances_for, LearnerSpec, LearnerVariant, Stage2};
use ivw_cate::pseudo::{PseudoOutcomeKind, WeightScheme};
use ivw_cate::sim::{generate_dataset, true_tau_rows, SimSetting};
use ivw_cate::verify::{run_all, VerifyOptions};

/// Weighted pseudo-outcome CATE estimation and simulation benchmarks.
#[derive(Parser, Debug)]
#[command(name = "cate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a dataset from a simulation setting and write it as CSV.
    Simulate(SimulateArgs),
    /// Run learners over simulation settings and write per-iteration rMSE.
    Bench(BenchArgs),
    /// Fit one learner on a dataset CSV and write effect estimates.
    Estimate(EstimateArgs),
    /// Run the numerical self-checks; exits 1 if any fails.
    Verify(VerifyArgs),
    /// Oracle R vs U comparison in setting F, as plot-ready CSV.
    CompareWeights(CompareWeightsArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Simulation setting (A-F).
    #[arg(long)]
    setting: SimSetting,
    /// Number of observations.
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct NuisanceArgs {
    /// Number of cross-fitting folds.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Sample split for the nuisances: 2, 3 or 4 ways.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=4))]
    split: u8,
    /// Trees per boosted model.
    #[arg(long, default_value_t = 200)]
    gbt_trees: usize,
    /// Depth of each tree.
    #[arg(long, default_value_t = 3)]
    gbt_depth: usize,
    /// Boosting learning rate.
    #[arg(long, default_value_t = 0.1)]
    gbt_lr: f64,
    /// Minimum rows per leaf.
    #[arg(long, default_value_t = 20)]
    gbt_min_leaf: usize,
    /// Use the true nuisance functions of the simulation setting.
    #[arg(long)]
    oracle_nuisances: bool,
}

impl NuisanceArgs {
    fn gbt(&self) -> GbtConfig {
        GbtConfig {
            num_trees: self.gbt_trees,
            learning_rate: self.gbt_lr,
            max_depth: self.gbt_depth,
            min_samples_leaf: self.gbt_min_leaf,
            ..GbtConfig::default()
        }
    }

    fn spec(&self, learner: &str, weights: &str) -> Result<LearnerSpec> {
        let gbt = self.gbt();
        let split = SplitScheme::from_ways(self.split as usize)?;
        if learner.eq_ignore_ascii_case("T") {
            return Ok(LearnerSpec {
                variant: LearnerVariant::TLearner(gbt),
                folds: self.folds,
                split,
                nuisance_gbt: gbt,
                oracle_nuisances: false,
            });
        }
        let kind: PseudoOutcomeKind = learner.parse()?;
        let weights = match weights.trim().to_ascii_lowercase().as_str() {
            "ivw" => kind.inverse_variance_weights(),
            other => other.parse::<WeightScheme>()?,
        };
        let spec = LearnerSpec {
            variant: LearnerVariant::Por {
                kind,
                weights,
                stage2: Stage2::Gbt(gbt),
            },
            folds: self.folds,
            split,
            nuisance_gbt: gbt,
            oracle_nuisances: self.oracle_nuisances || kind == PseudoOutcomeKind::OracleR,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated settings.
    #[arg(long, alias = "setting", value_delimiter = ',', default_value = "A,B,C,D,E,F")]
    settings: Vec<SimSetting>,
    /// Training sample size per iteration.
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated learners: U, DR, IPW, OR, T.
    #[arg(long, value_delimiter = ',', default_value = "DR,U,T")]
    learners: Vec<String>,
    /// Comma-separated weight schemes: uniform, ivw, rlearner.
    /// `ivw` picks the inverse-variance weights of each pseudo-outcome.
    #[arg(long, value_delimiter = ',', default_value = "uniform,ivw")]
    weights: Vec<String>,
    /// Test covariates drawn per iteration.
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    #[command(flatten)]
    nuisance: NuisanceArgs,
    /// Results CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional CSV of median rMSE per cell.
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Dataset CSV with header x1..xd,a,y.
    #[arg(long)]
    input: PathBuf,
    /// Prediction CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Learner: U, DR, IPW, OR or T.
    #[arg(long, default_value = "DR")]
    learner: String,
    /// Weight scheme: uniform, ivw or rlearner.
    #[arg(long, default_value = "ivw")]
    weights: String,
    /// Setting that generated the data; adds a tau_true column and
    /// enables oracle nuisances.
    #[arg(long)]
    setting: Option<SimSetting>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    nuisance: NuisanceArgs,
    /// Also write the nuisance estimates used by the learner.
    #[arg(long)]
    nuisance_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Monte Carlo draws for the variance and bias checks.
    #[arg(long, default_value_t = 1_000_000)]
    mc_draws: usize,
    #[arg(long, default_value_t = VerifyOptions::default().seed)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CompareWeightsArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Number of evaluation points.
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Kernel bandwidth; the default rule for n is used when omitted.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let data = generate_dataset(args.setting, args.n, args.seed)?;
    emit(args.out.as_deref(), &dataset_to_csv(&data))
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut learners = Vec::new();
    for l in &args.learners {
        if l.eq_ignore_ascii_case("T") {
            learners.push(args.nuisance.spec(l, "uniform")?);
            continue;
        }
        for w in &args.weights {
            learners.push(args.nuisance.spec(l, w)?);
        }
    }
    let cfg = BenchConfig {
        settings: args.settings.clone(),
        learners,
        n: args.n,
        iterations: args.iterations,
        seed: args.seed,
        test_size: args.test_size,
    };
    let table = run_benchmark(&cfg)?;
    emit(args.out.as_deref(), &table.to_csv())?;
    if let Some(p) = &args.summary_out {
        emit(Some(p), &table.summary_csv())?;
    }
    if table.error_count() > 0 {
        eprintln!("{} of {} runs failed; see the error column", table.error_count(), table.len());
    }
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let file = fs::File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let data = read_dataset_csv(file)?;
    let spec = args.nuisance.spec(&args.learner, &args.weights)?;
    if spec.oracle_nuisances && args.setting.is_none() {
        bail!("oracle nuisances need --setting");
    }
    if let Some(s) = args.setting {
        if s.dim() != data.dim() {
            bail!("setting {s} has {} covariates but the input has {}", s.dim(), data.dim());
        }
    }
    let tau_hat = fit_predict(&spec, &data, args.setting, data.x.view(), args.seed)?;
    let tau_true = match args.setting {
        Some(s) => Some(true_tau_rows(s, data.x.view())?),
        None => None,
    };
    emit(
        args.out.as_deref(),
        &predictions_to_csv(data.x.view(), &tau_hat, tau_true.as_deref())?,
    )?;
    if let Some(p) = &args.nuisance_out {
        if matches!(spec.variant, LearnerVariant::TLearner(_)) {
            bail!("the T-learner has no cross-fitted nuisances to write");
        }
        let fit = nuisances_for(&spec, &data, args.setting, args.seed)?;
        emit(Some(p), &nuisances_to_csv(&fit))?;
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let opts = VerifyOptions {
        mc_draws: args.mc_draws,
        seed: args.seed,
    };
    let outcomes = run_all(&opts)?;
    let mut ok = true;
    for o in &outcomes {
        println!("{o}");
        ok &= o.passed;
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} checks, {failed} failed", outcomes.len());
    Ok(ok)
}

fn compare_weights(args: CompareWeightsArgs) -> Result<()> {
    let cmp = weighting_comparison(args.n, args.grid, args.bandwidth, args.seed)?;
    eprintln!(
        "rmse weighted={} unweighted={}",
        cmp.rmse_weighted, cmp.rmse_unweighted
    );
    emit(args.out.as_deref(), &cmp.to_csv())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Bench(a) => bench(a).map(|_| true),
        Command::Estimate(a) => estimate(a).map(|_| true),
        Command::Verify(a) => verify(a),
        Command::CompareWeights(a) => compare_weights(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
