//! Command-line interface: argument parsing and command dispatch.
//!
//! Three subcommands cover the pipeline end to end:
//!
//! * `corrdiff test` — ingest paired expression data plus a GMT file,
//!   test every gene set, adjust across sets, and write `results.tsv`,
//!   `summary.json`, and `summary.tsv` into the output directory;
//! * `corrdiff simulate` — run the size/power/uniformity harness on a
//!   synthetic model and print its TSV report;
//! * `corrdiff power` — evaluate a closed-form power lower bound, or
//!   pick the exceedance threshold for a given sparsity estimate.
//!
//! The binary exits 0 on success and 2 on any validation failure
//! (including argument errors, which `clap` also reports with code 2).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use corrdiff_core::{
    power_bound_exceed, power_bound_max, power_bound_squares, run_harness, select_threshold,
    AlternativeSpec, AnalysisPlan, DenseModelConfig, ExceedanceWeight, GammaPrior, HarnessConfig,
    Hypothesis, MaxBoundBranch, ModelConfig, NullRegime, SparseModelConfig, StatisticKind,
    TestRequest, ThresholdRule,
};

use crate::batch::{results_tsv, run_batch, BatchConfig};
use crate::error::{CliError, Result};
use crate::fdr::FdrMethod;
use crate::gmt::parse_gmt;
use crate::ingest::ingest;
use crate::summary::summarize;

/// Differential-correlation testing for paired samples.
#[derive(Debug, Parser)]
#[command(
    name = "corrdiff",
    version,
    about = "Tests whether two correlation matrices estimated from paired samples differ, \
             using average-of-squares, maximum, and thresholded-exceedance statistics"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test each gene set for a correlation difference between conditions.
    Test(TestArgs),
    /// Run the simulation harness on a synthetic model.
    Simulate(SimulateArgs),
    /// Evaluate power lower bounds or select an exceedance threshold.
    Power(PowerArgs),
}

#[derive(Debug, Args)]
struct TestArgs {
    /// Expression table: TSV with a gene-id column then one column per sample.
    #[arg(long)]
    expr: PathBuf,
    /// Sample pairing: TSV with sample_id, patient_id, condition (I or II).
    #[arg(long)]
    pairs: PathBuf,
    /// Gene sets in GMT format (name, description, gene ids...).
    #[arg(long)]
    gmt: PathBuf,
    /// Statistics to run: comma-separated subset of s,m,e.
    #[arg(long, default_value = "s,m,e")]
    tests: String,
    /// Null calibration: ad (permutation-corrected closed form),
    /// np (permutation quantiles), or ai (independence closed form).
    #[arg(long, default_value = "ad")]
    null: String,
    /// Permutation replicates; defaults to 200 for ad, 1000 for np, 0 for ai.
    #[arg(long = "B")]
    b: Option<usize>,
    /// Significance level for the adjusted counts.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Exceedance weight: 0 (squared values) or 1 (squared excesses).
    #[arg(long, default_value_t = 0)]
    w: u8,
    /// Exceedance threshold: "auto" (data-driven selection) or a number.
    #[arg(long, default_value = "auto")]
    u: String,
    /// Multiplicity adjustment: bh (Benjamini-Hochberg) or by (Benjamini-Yekutieli).
    #[arg(long, default_value = "bh")]
    fdr: String,
    /// Seed for all permutation streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for results.tsv, summary.json, summary.tsv.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Generator: iid (independent noise), dense, or sparse.
    #[arg(long, default_value = "iid")]
    model: String,
    /// Variables per condition.
    #[arg(long, default_value_t = 40)]
    p: usize,
    /// Paired samples.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Ridge level for the dense model.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// h0 (equal correlation matrices) or h1 (a planted difference).
    #[arg(long, default_value = "h0")]
    hypothesis: String,
    /// Simulation replicates (at least 100).
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Statistics to run: comma-separated subset of s,m,e.
    #[arg(long, default_value = "s,m,e")]
    tests: String,
    /// Null regimes: comma-separated subset of ai,ad,np.
    #[arg(long, default_value = "np")]
    null: String,
    /// Permutation replicates per dataset; defaults as in `test`.
    #[arg(long = "B")]
    b: Option<usize>,
    /// Rejection level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Exceedance weight: 0 or 1.
    #[arg(long, default_value_t = 0)]
    w: u8,
    /// Exceedance threshold: "auto" or a number.
    #[arg(long, default_value = "auto")]
    u: String,
    /// Base seed; replicate streams derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the TSV report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct PowerArgs {
    /// Which statistic's bound: s, m, or e (bound mode).
    #[arg(long)]
    test: Option<String>,
    /// Sample size.
    #[arg(long)]
    n: usize,
    /// Number of variable pairs.
    #[arg(long)]
    m: usize,
    /// Test level (must be below 1/2).
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Comma-separated non-null magnitudes on the transformed scale.
    #[arg(long)]
    deltas: Option<String>,
    /// Exceedance threshold (bound mode, test e).
    #[arg(long)]
    u: Option<f64>,
    /// Exceedance weight: 0 or 1.
    #[arg(long, default_value_t = 0)]
    w: u8,
    /// Average squared null correlation between difference pairs.
    #[arg(long, default_value_t = 0.0)]
    gamma2bar: f64,
    /// Alternative-regime analogue of --gamma2bar (defaults to it).
    #[arg(long)]
    gamma2bar_h1: Option<f64>,
    /// Max-test branch: "fixed" (bounded signal count) or "growing".
    #[arg(long, default_value = "fixed")]
    branch: String,
    /// Select the exceedance threshold instead of evaluating a bound.
    #[arg(long)]
    select_threshold: bool,
    /// Estimated proportion of non-null pairs (threshold selection).
    #[arg(long)]
    rho: Option<f64>,
    /// Prior mode for the signal magnitude (default: anchored at the
    /// null upper-alpha point).
    #[arg(long)]
    prior_mode: Option<f64>,
    /// Prior variance (default: the squared mode).
    #[arg(long)]
    prior_var: Option<f64>,
}

/// Parses arguments from the process environment and runs the command,
/// mapping failures to exit code 2.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Runs one parsed command.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Test(args) => execute_test(args),
        Command::Simulate(args) => execute_simulate(args),
        Command::Power(args) => execute_power(args),
    }
}

// ---------------------------------------------------------------------------
// Argument interpretation
// ---------------------------------------------------------------------------

/// Statistic letters (`s,m,e`) to kinds, deduplicated in request order.
fn parse_kinds(spec: &str) -> Result<Vec<StatisticKind>> {
    let mut kinds = Vec::new();
    for token in spec.split(',') {
        let kind = match token.trim().to_ascii_lowercase().as_str() {
            "s" | "squares" => StatisticKind::Squares,
            "m" | "max" => StatisticKind::Max,
            "e" | "exceedance" => StatisticKind::Exceedance,
            other => {
                return Err(CliError::Invalid(format!(
                    "unknown test \"{other}\" (expected s, m, or e)"
                )))
            }
        };
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(CliError::Invalid("no tests requested".to_string()));
    }
    Ok(kinds)
}

/// One regime name to its enum value.
fn parse_regime(token: &str) -> Result<NullRegime> {
    match token.trim().to_ascii_lowercase().as_str() {
        "ai" => Ok(NullRegime::AsymptoticIndependence),
        "ad" => Ok(NullRegime::AsymptoticDependence),
        "np" => Ok(NullRegime::NonParametric),
        other => Err(CliError::Invalid(format!(
            "unknown null regime \"{other}\" (expected ai, ad, or np)"
        ))),
    }
}

/// Comma-separated regimes, deduplicated in request order.
fn parse_regimes(spec: &str) -> Result<Vec<NullRegime>> {
    let mut regimes = Vec::new();
    for token in spec.split(',') {
        let regime = parse_regime(token)?;
        if !regimes.contains(&regime) {
            regimes.push(regime);
        }
    }
    if regimes.is_empty() {
        return Err(CliError::Invalid("no null regimes requested".to_string()));
    }
    Ok(regimes)
}

/// `auto` or an explicit threshold value.
fn parse_threshold(spec: &str) -> Result<ThresholdRule> {
    let trimmed = spec.trim();
    if trimmed.eq_ignore_ascii_case("auto") {
        return Ok(ThresholdRule::Auto);
    }
    let u: f64 = trimmed.parse().map_err(|_| {
        CliError::Invalid(format!(
            "threshold \"{trimmed}\" is neither \"auto\" nor a number"
        ))
    })?;
    Ok(ThresholdRule::Fixed(u))
}

/// `h0`/`h1` to the hypothesis enum.
fn parse_hypothesis(spec: &str) -> Result<Hypothesis> {
    match spec.trim().to_ascii_lowercase().as_str() {
        "h0" | "null" => Ok(Hypothesis::Null),
        "h1" | "alternative" => Ok(Hypothesis::Alternative),
        other => Err(CliError::Invalid(format!(
            "unknown hypothesis \"{other}\" (expected h0 or h1)"
        ))),
    }
}

/// Default permutation count when `--B` is omitted: enough for the
/// dependence-corrected fits, more for raw permutation quantiles, none
/// when only closed forms run.
fn default_b(regimes: &[NullRegime]) -> usize {
    if regimes.contains(&NullRegime::NonParametric) {
        1000
    } else if regimes.contains(&NullRegime::AsymptoticDependence) {
        200
    } else {
        0
    }
}

/// Applies `--threads`; keeping the default pool when unset.
fn configure_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("warning: --threads ignored, thread pool already running ({e})");
        }
    }
}

/// Writes `contents` to `dir/name`.
fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(path.clone(), e))?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn execute_test(args: TestArgs) -> Result<()> {
    configure_threads(args.threads);

    let kinds = parse_kinds(&args.tests)?;
    let regime = parse_regime(&args.null)?;
    let weight = ExceedanceWeight::from_flag(args.w)?;
    let threshold = parse_threshold(&args.u)?;
    let fdr: FdrMethod = args.fdr.parse()?;
    let b = args.b.unwrap_or_else(|| default_b(&[regime]));

    let table = ingest(&args.expr, &args.pairs)?;
    let sets = parse_gmt(&args.gmt)?;
    if sets.is_empty() {
        return Err(CliError::Invalid(format!(
            "{} contains no gene sets to test",
            args.gmt.display()
        )));
    }

    let requests: Vec<TestRequest> = kinds
        .iter()
        .map(|&kind| TestRequest::new(kind, regime))
        .collect();
    let plan = AnalysisPlan::new(requests, b, args.alpha, args.seed)?
        .with_weight(weight)
        .with_threshold(threshold)?;
    let config = BatchConfig::new(plan, fdr)?;

    let rows = run_batch(&table, &sets, &config)?;
    let summary = summarize(&rows, args.alpha)?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(args.out.clone(), e))?;
    let results_path = write_output(&args.out, "results.tsv", &results_tsv(&rows))?;
    let json_path = write_output(&args.out, "summary.json", &summary.to_json())?;
    write_output(&args.out, "summary.tsv", &summary.to_tsv())?;

    println!(
        "analyzed {} of {} gene sets ({} failed) at n = {}",
        summary.sets_analyzed(),
        summary.sets_total(),
        summary.sets_failed(),
        table.n()
    );
    println!("results: {}", results_path.display());
    println!("summary: {}", json_path.display());
    Ok(())
}

fn execute_simulate(args: SimulateArgs) -> Result<()> {
    configure_threads(args.threads);

    let kinds = parse_kinds(&args.tests)?;
    let regimes = parse_regimes(&args.null)?;
    let weight = ExceedanceWeight::from_flag(args.w)?;
    let threshold = parse_threshold(&args.u)?;
    let hypothesis = parse_hypothesis(&args.hypothesis)?;
    let b = args.b.unwrap_or_else(|| default_b(&regimes));

    let model = match args.model.trim().to_ascii_lowercase().as_str() {
        "iid" => {
            if hypothesis == Hypothesis::Alternative {
                return Err(CliError::Invalid(
                    "the iid model has no alternative regime; use dense or sparse".to_string(),
                ));
            }
            ModelConfig::IidNoise {
                p: args.p,
                n: args.n,
                seed: args.seed,
            }
        }
        "dense" => ModelConfig::Dense(DenseModelConfig::new(
            args.p,
            args.n,
            args.lambda,
            hypothesis,
            args.seed,
        )?),
        "sparse" => ModelConfig::Sparse(SparseModelConfig::new(
            args.p,
            args.n,
            hypothesis,
            args.seed,
        )?),
        other => {
            return Err(CliError::Invalid(format!(
                "unknown model \"{other}\" (expected iid, dense, or sparse)"
            )))
        }
    };

    let mut requests = Vec::with_capacity(kinds.len() * regimes.len());
    for &kind in &kinds {
        for &regime in &regimes {
            requests.push(TestRequest::new(kind, regime));
        }
    }
    let config = HarnessConfig::new(model, requests, args.reps, b, args.alpha, args.seed)?
        .with_weight(weight)
        .with_threshold(threshold)?;
    let report = run_harness(&config)?;
    let tsv = report.to_tsv();

    if let Some(path) = &args.out {
        std::fs::write(path, &tsv).map_err(|e| CliError::io(path.clone(), e))?;
    }
    print!("{tsv}");
    Ok(())
}

fn execute_power(args: PowerArgs) -> Result<()> {
    if args.select_threshold {
        return execute_threshold_selection(args);
    }

    let test = args.test.as_deref().ok_or_else(|| {
        CliError::Invalid("--test s|m|e is required unless --select-threshold is set".to_string())
    })?;
    let deltas_spec = args.deltas.as_deref().ok_or_else(|| {
        CliError::Invalid("--deltas is required to evaluate a bound".to_string())
    })?;
    let mut deltas = Vec::new();
    for token in deltas_spec.split(',') {
        let value: f64 = token.trim().parse().map_err(|_| {
            CliError::Invalid(format!("signal magnitude \"{}\" is not a number", token.trim()))
        })?;
        deltas.push(value);
    }
    let alt = AlternativeSpec::explicit(deltas)?;

    let (label, outcome) = match test.trim().to_ascii_lowercase().as_str() {
        "s" | "squares" => (
            "squares",
            power_bound_squares(
                &alt,
                args.n,
                args.m,
                args.gamma2bar,
                args.gamma2bar_h1.unwrap_or(args.gamma2bar),
                args.alpha,
            )?,
        ),
        "m" | "max" => {
            let branch = match args.branch.trim().to_ascii_lowercase().as_str() {
                "fixed" => MaxBoundBranch::FixedSignalCount,
                "growing" => MaxBoundBranch::GrowingSignalCount,
                other => {
                    return Err(CliError::Invalid(format!(
                        "unknown branch \"{other}\" (expected fixed or growing)"
                    )))
                }
            };
            ("max", power_bound_max(&alt, args.n, args.m, args.alpha, branch)?)
        }
        "e" | "exceedance" => {
            let u = args.u.ok_or_else(|| {
                CliError::Invalid("--u is required for the exceedance bound".to_string())
            })?;
            let w = ExceedanceWeight::from_flag(args.w)?;
            (
                "exceedance",
                power_bound_exceed(&alt, u, w, args.n, args.m, args.alpha)?,
            )
        }
        other => {
            return Err(CliError::Invalid(format!(
                "unknown test \"{other}\" (expected s, m, or e)"
            )))
        }
    };

    let document = serde_json::json!({
        "test": label,
        "n": args.n,
        "m": args.m,
        "alpha": args.alpha,
        "s": alt.s(),
        "condition_met": outcome.condition_met(),
        "z_ratio": outcome.z_ratio(),
        "bound": outcome.value(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&document).expect("serialization cannot fail")
    );
    Ok(())
}

fn execute_threshold_selection(args: PowerArgs) -> Result<()> {
    let rho = args.rho.ok_or_else(|| {
        CliError::Invalid("--rho (estimated non-null proportion) is required".to_string())
    })?;
    let w = ExceedanceWeight::from_flag(args.w)?;
    let prior = match (args.prior_mode, args.prior_var) {
        (Some(mode), var) => GammaPrior::from_mode_and_variance(mode, var.unwrap_or(mode * mode))?,
        (None, Some(_)) => {
            return Err(CliError::Invalid(
                "--prior-var needs --prior-mode".to_string(),
            ))
        }
        (None, None) => GammaPrior::anchored(args.n, args.alpha)?,
    };
    let selection = select_threshold(args.n, args.m, rho, w, &prior, args.alpha)?;

    let document = serde_json::json!({
        "n": args.n,
        "m": args.m,
        "rho_s": rho,
        "w": w.flag(),
        "alpha": args.alpha,
        "prior_mode": prior.mode(),
        "prior_variance": prior.variance(),
        "u_optimal": selection.u_optimal(),
        "u_final": selection.u_final(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&document).expect("serialization cannot fail")
    );
    Ok(())
}
