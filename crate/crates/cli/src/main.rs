//! `adapt` — batch driver for drift-robust GLM transfer estimation.
//!
//! Subcommands: `simulate` (synthetic drift benchmark data), `fit` (one
//! estimator on CSV data), `benchmark` (rho / perturbation sweeps),
//! `evaluate` (AUC of a saved model on a dataset), `aging` (relative AUC
//! degradation from a results table).
//!
//! stdout carries machine-readable results only; human diagnostics go to
//! stderr. Exit codes: 0 success, 2 invalid configuration or arguments,
//! 3 I/O failure, 4 solver failure, 5 metric precondition failure.

mod store;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use adapt_core::adapt::{AnchorChoice, BankComposition, PenaltyPolicy, PipelineOptions};
use adapt_core::error::Error as CoreError;
use adapt_core::harness::{run_perturb_sweep_with, run_rho_sweep_with, ExperimentConfig};
use adapt_core::io::{
    auc_table_from_rows, read_dataset_csv, read_model_json, read_results_csv,
    write_coefficient_path_json, write_dataset_csv, write_failures_csv, write_json,
    write_model_json, write_results_csv, write_summary_csv,
};
use adapt_core::metrics::{aging_effect_with, MissingCellPolicy};
use adapt_core::rng::{derive_seed, domain};
use adapt_core::sim::{generate_coefficient_path, generate_dataset, DriftConfig};
use adapt_core::{
    auc, predict_scores, run_adapt_pipeline_full, summarize, Dataset, LinkFunction,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_SOLVER: u8 = 4;
const EXIT_METRIC: u8 = 5;

#[derive(Parser)]
#[command(name = "adapt", version, about = "Drift-robust GLM transfer estimation")]
struct Cli {
    /// Master seed; overrides any seed found in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the benchmark sweep (other commands are
    /// single-threaded).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate per-period synthetic datasets and the coefficient path.
    Simulate(SimulateArgs),
    /// Fit one estimator and write model + diagnostics JSON.
    Fit(FitArgs),
    /// Run a sweep and write results/summary CSVs.
    Benchmark(BenchmarkArgs),
    /// Print the AUC of a saved model on a dataset.
    Evaluate(EvaluateArgs),
    /// Print the aging effect A(delta) from a results CSV.
    Aging(AgingArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Drift config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Adapt,
    TargetOnly,
    Pooled,
    Maximin,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnchorArg {
    Target,
    Zero,
    SourceCombo,
}

#[derive(Clone, Copy, ValueEnum)]
enum BankArg {
    Full,
    Sources,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkArg {
    Logistic,
    Identity,
}

impl From<LinkArg> for LinkFunction {
    fn from(l: LinkArg) -> Self {
        match l {
            LinkArg::Logistic => LinkFunction::Logistic,
            LinkArg::Identity => LinkFunction::Identity,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    method: MethodArg,

    /// Current-target dataset CSV.
    #[arg(long)]
    target: PathBuf,

    /// Glob pattern(s) for source dataset CSVs; repeatable.
    #[arg(long)]
    sources: Vec<String>,

    #[arg(long, value_enum, default_value = "logistic")]
    link: LinkArg,

    /// Loss threshold override; accepts `inf`.
    #[arg(long)]
    tau: Option<String>,

    #[arg(long, value_enum, default_value = "target")]
    anchor: AnchorArg,

    #[arg(long, value_enum, default_value = "full")]
    bank: BankArg,

    #[arg(long, default_value_t = 0.5)]
    split_fraction: f64,

    #[arg(long, default_value_t = 1.0)]
    mixing: f64,

    #[arg(long, default_value_t = 5)]
    folds: usize,

    #[arg(long, default_value_t = 30)]
    grid_size: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Rho,
    Perturb,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, value_enum)]
    sweep: SweepArg,

    /// Skip per-cell artifact persistence (models, diagnostics, scores).
    #[arg(long)]
    no_artifacts: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,

    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct AgingArgs {
    #[arg(long)]
    results: PathBuf,

    #[arg(long)]
    delta: i64,

    /// Method to aggregate; required when the CSV holds several.
    #[arg(long)]
    method: Option<String>,

    /// Last period T of the average; defaults to the largest eval period.
    #[arg(long)]
    t_end: Option<i64>,

    /// Skip (rather than fail on) missing table cells.
    #[arg(long)]
    skip_missing: bool,
}

/// Written to every output directory before any other file.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_path: Option<String>,
    seed: u64,
    out_dir: String,
    tool_version: &'a str,
    timestamp_unix: u64,
}

fn write_manifest(command: &str, config: Option<&Path>, seed: u64, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(e.to_string()))?;
    let manifest = RunManifest {
        command,
        config_path: config.map(|p| p.display().to_string()),
        seed,
        out_dir: out.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write_json(&manifest, &out.join("manifest.json")).map_err(CliError::from_core)
}

/// Error with a chosen exit code.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        CliError::new(EXIT_CONFIG, message)
    }

    fn io(message: impl Into<String>) -> Self {
        CliError::new(EXIT_IO, message)
    }

    fn from_core(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Io(_) | CoreError::Csv(_) => EXIT_IO,
            CoreError::SolverDidNotConverge { .. } | CoreError::InfeasibleSet { .. } => EXIT_SOLVER,
            CoreError::SingleClassLabels
            | CoreError::MissingAucEntry { .. }
            | CoreError::NonpositiveDenominator { .. }
            | CoreError::NoFutureEntries { .. } => EXIT_METRIC,
            _ => EXIT_CONFIG,
        };
        CliError::new(code, e.to_string())
    }

    /// For metric commands every precondition failure reports as exit 5.
    fn from_core_metric(e: CoreError) -> Self {
        let mut err = CliError::from_core(e);
        if err.code == EXIT_CONFIG {
            err.code = EXIT_METRIC;
        }
        err
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn out_dir(cli_out: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    cli_out
        .clone()
        .ok_or_else(|| CliError::config("--out <dir> is required for this command"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(&cli, args),
        Command::Fit(args) => cmd_fit(&cli, args),
        Command::Benchmark(args) => cmd_benchmark(&cli, args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Aging(args) => cmd_aging(args),
    }
}

fn load_json_config<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<(), CliError> {
    let mut config: DriftConfig = match &args.config {
        Some(p) => load_json_config(p)?,
        None => DriftConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().map_err(CliError::from_core)?;

    let out = out_dir(&cli.out)?;
    write_manifest("simulate", args.config.as_deref(), config.seed, &out)?;

    let path = generate_coefficient_path(&config).map_err(CliError::from_core)?;
    write_coefficient_path_json(&path, &out.join("coefficient_path.json"))
        .map_err(CliError::from_core)?;
    for period in 1..=config.periods {
        let seed = derive_seed(config.seed, &[domain::SCENARIO_HIST, period as u64]);
        let data = generate_dataset(path.at(period), config.n_per_period, seed)
            .with_period(period as i64);
        let file = out.join(format!("period_{period:02}.csv"));
        write_dataset_csv(&data, &file).map_err(CliError::from_core)?;
    }
    eprintln!(
        "simulate: wrote {} period datasets and the coefficient path to {}",
        config.periods,
        out.display()
    );
    Ok(())
}

fn read_sources(patterns: &[String]) -> Result<Vec<Dataset>, CliError> {
    let mut paths = Vec::new();
    for pattern in patterns {
        let matches = glob::glob(pattern)
            .map_err(|e| CliError::config(format!("bad glob '{pattern}': {e}")))?;
        for m in matches {
            let p = m.map_err(|e| CliError::io(e.to_string()))?;
            paths.push(p);
        }
    }
    paths.sort();
    paths.dedup();
    let mut out = Vec::new();
    for p in &paths {
        out.push(read_dataset_csv(p).map_err(CliError::from_core)?);
    }
    Ok(out)
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    let link: LinkFunction = args.link.into();
    let target = read_dataset_csv(&args.target).map_err(CliError::from_core)?;
    let sources = read_sources(&args.sources)?;

    let penalty = PenaltyPolicy {
        mixing: args.mixing,
        folds: args.folds,
        grid_size: args.grid_size,
        standardize: true,
    };

    let tau_override = match &args.tau {
        None => None,
        Some(s) if s == "inf" || s == "infinity" => Some(f64::INFINITY),
        Some(s) => Some(
            s.parse::<f64>()
                .map_err(|_| CliError::config(format!("invalid --tau '{s}'")))?,
        ),
    };

    let out = out_dir(&cli.out)?;
    write_manifest("fit", None, seed, &out)?;

    let needs_sources = !matches!(args.method, MethodArg::TargetOnly);
    if needs_sources && sources.is_empty() && !matches!(args.method, MethodArg::Pooled) {
        return Err(CliError::config(
            "this method requires at least one source dataset (>= 1 source required)",
        ));
    }

    #[derive(Serialize)]
    struct FitDiagnostics<'a> {
        method: &'a str,
        n_sources: usize,
        tau: Option<f64>,
        solve: Option<&'a adapt_core::AdaptDiagnostics>,
        weights: Option<&'a [f64]>,
    }

    match args.method {
        MethodArg::TargetOnly => {
            let beta = adapt_core::fit_target_only(
                &target,
                link,
                &penalty,
                derive_seed(seed, &[domain::FIT_TARGET_ONLY]),
            )
            .map_err(CliError::from_core)?;
            write_model_json(&beta, link, &out.join("model.json")).map_err(CliError::from_core)?;
            write_json(
                &FitDiagnostics {
                    method: "target_only",
                    n_sources: 0,
                    tau: None,
                    solve: None,
                    weights: None,
                },
                &out.join("diagnostics.json"),
            )
            .map_err(CliError::from_core)?;
        }
        MethodArg::Pooled => {
            let beta = adapt_core::fit_pooled(
                &sources,
                &target,
                link,
                &penalty,
                derive_seed(seed, &[domain::FIT_POOLED]),
            )
            .map_err(CliError::from_core)?;
            write_model_json(&beta, link, &out.join("model.json")).map_err(CliError::from_core)?;
            write_json(
                &FitDiagnostics {
                    method: "pooled",
                    n_sources: sources.len(),
                    tau: None,
                    solve: None,
                    weights: None,
                },
                &out.join("diagnostics.json"),
            )
            .map_err(CliError::from_core)?;
        }
        MethodArg::Adapt | MethodArg::Maximin => {
            let opts = match args.method {
                MethodArg::Adapt => PipelineOptions {
                    penalty,
                    split_fraction: args.split_fraction,
                    anchor: match args.anchor {
                        AnchorArg::Target => AnchorChoice::Target,
                        AnchorArg::Zero => AnchorChoice::Zero,
                        AnchorArg::SourceCombo => AnchorChoice::SourceCombo,
                    },
                    bank: match args.bank {
                        BankArg::Full => BankComposition::TargetAndSources,
                        BankArg::Sources => BankComposition::SourcesOnly,
                    },
                    tau_override,
                },
                // The group-robust baseline is the same solve with a zero
                // anchor, source-only bank, and no loss constraint.
                MethodArg::Maximin => PipelineOptions {
                    penalty,
                    split_fraction: args.split_fraction,
                    anchor: AnchorChoice::Zero,
                    bank: BankComposition::SourcesOnly,
                    tau_override: Some(f64::INFINITY),
                },
                _ => unreachable!(),
            };
            let method_name = match args.method {
                MethodArg::Adapt => "adapt",
                _ => "maximin",
            };
            match run_adapt_pipeline_full(&sources, &target, link, seed, &opts) {
                Ok(fit) => {
                    write_model_json(&fit.beta, link, &out.join("model.json"))
                        .map_err(CliError::from_core)?;
                    write_json(
                        &FitDiagnostics {
                            method: method_name,
                            n_sources: sources.len(),
                            tau: Some(fit.tau),
                            solve: Some(&fit.diagnostics),
                            weights: Some(fit.weights.as_slice()),
                        },
                        &out.join("diagnostics.json"),
                    )
                    .map_err(CliError::from_core)?;
                }
                Err(e @ (CoreError::SolverDidNotConverge { .. } | CoreError::InfeasibleSet { .. })) => {
                    // Solver failures still leave diagnostics behind.
                    #[derive(Serialize)]
                    struct FailureDiagnostics<'a> {
                        method: &'a str,
                        error: String,
                    }
                    write_json(
                        &FailureDiagnostics {
                            method: method_name,
                            error: e.to_string(),
                        },
                        &out.join("diagnostics.json"),
                    )
                    .map_err(CliError::from_core)?;
                    return Err(CliError::from_core(e));
                }
                Err(e) => return Err(CliError::from_core(e)),
            }
        }
    }
    eprintln!("fit: wrote model and diagnostics to {}", out.display());
    Ok(())
}

fn cmd_benchmark(cli: &Cli, args: &BenchmarkArgs) -> Result<(), CliError> {
    let mut config: ExperimentConfig = match &args.config {
        Some(p) => load_json_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().map_err(CliError::from_core)?;

    let out = out_dir(&cli.out)?;
    write_manifest("benchmark", args.config.as_deref(), config.seed, &out)?;

    let store = if args.no_artifacts {
        None
    } else {
        Some(store::FsCellStore::new(&out).map_err(CliError::from_core)?)
    };
    let store_ref: Option<&dyn adapt_core::harness::CellStore> =
        store.as_ref().map(|s| s as &dyn adapt_core::harness::CellStore);

    let sweep = || match args.sweep {
        SweepArg::Rho => run_rho_sweep_with(&config, &[], store_ref),
        SweepArg::Perturb => run_perturb_sweep_with(&config, &[], store_ref),
    };
    let output = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config(e.to_string()))?
            .install(sweep),
        None => sweep(),
    }
    .map_err(CliError::from_core)?;

    write_results_csv(&output.rows, &out.join("results.csv")).map_err(CliError::from_core)?;
    let summary = summarize(&output.rows);
    write_summary_csv(&summary, &out.join("summary.csv")).map_err(CliError::from_core)?;
    if !output.failures.is_empty() {
        write_failures_csv(&output.failures, &out.join("failures.csv"))
            .map_err(CliError::from_core)?;
    }
    eprintln!(
        "benchmark: {} rows, {} failures -> {}",
        output.rows.len(),
        output.failures.len(),
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let (beta, link) = read_model_json(&args.model).map_err(CliError::from_core)?;
    let data = read_dataset_csv(&args.data).map_err(CliError::from_core)?;
    let scores = predict_scores(&beta, &data, link).map_err(CliError::from_core_metric)?;
    let value = auc(
        scores.as_slice().expect("contiguous scores"),
        data.outcomes().as_slice().expect("contiguous outcomes"),
    )
    .map_err(CliError::from_core_metric)?;
    println!("{value}");
    Ok(())
}

fn cmd_aging(args: &AgingArgs) -> Result<(), CliError> {
    let rows = read_results_csv(&args.results).map_err(CliError::from_core)?;
    if rows.is_empty() {
        return Err(CliError::new(EXIT_METRIC, "results CSV has no rows"));
    }
    let table =
        auc_table_from_rows(&rows, args.method.as_deref()).map_err(CliError::from_core_metric)?;
    let t_end = args
        .t_end
        .unwrap_or_else(|| rows.iter().map(|r| r.eval_period).max().unwrap_or(0));
    let policy = if args.skip_missing {
        MissingCellPolicy::Skip
    } else {
        MissingCellPolicy::Fail
    };
    let value =
        aging_effect_with(&table, args.delta, t_end, policy).map_err(CliError::from_core_metric)?;
    println!("{value}");
    Ok(())
}
