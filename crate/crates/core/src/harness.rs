//! Experiment orchestration: baseline estimators, target splits, sweep
//! execution over (rho, perturbation) grids with repetitions, and result
//! aggregation.
//!
//! Sweep cells are independent work items. Each cell derives its RNG
//! sub-stream from (master seed, rho index, perturbation index, rep), so
//! results are identical regardless of execution order or thread count.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{
    maximin_estimate, run_adapt_with_models, AdaptDiagnostics, ModelBank, PenaltyPolicy,
    PipelineOptions, SourceModel,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{hessian, predict_scores, CoefficientVector, LinkFunction};
use crate::metrics::auc;
use crate::rng::{derive_seed, domain, stream};
use crate::sim::{generate_scenario, DriftConfig, Scenario};

/// Built-in estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Adapt,
    TargetOnly,
    Pooled,
    Maximin,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Adapt => "adapt",
            Method::TargetOnly => "target_only",
            Method::Pooled => "pooled",
            Method::Maximin => "maximin",
        }
    }

    pub const ALL: [Method; 4] = [
        Method::Adapt,
        Method::TargetOnly,
        Method::Pooled,
        Method::Maximin,
    ];
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_rho_grid() -> Vec<f64> {
    vec![0.1, 0.2, 0.5, 1.0]
}
fn default_perturb_grid() -> Vec<f64> {
    vec![0.0, 0.3, 0.6, 0.9]
}
fn default_repetitions() -> usize {
    20
}
fn default_current_period() -> usize {
    10
}
fn default_eval_sample_size() -> usize {
    2000
}

/// Full description of a benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub drift: DriftConfig,
    pub methods: Vec<Method>,
    pub rho_grid: Vec<f64>,
    pub perturb_grid: Vec<f64>,
    pub repetitions: usize,
    /// The designated current period T0; sources are periods before it.
    pub current_period: usize,
    /// Fresh evaluation draws per (period, rep).
    pub eval_sample_size: usize,
    pub penalty: PenaltyPolicy,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            drift: DriftConfig::default(),
            methods: default_methods(),
            rho_grid: default_rho_grid(),
            perturb_grid: default_perturb_grid(),
            repetitions: default_repetitions(),
            current_period: default_current_period(),
            eval_sample_size: default_eval_sample_size(),
            penalty: PenaltyPolicy::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.drift.validate()?;
        if self.repetitions < 1 {
            return Err(Error::invalid_config("repetitions must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid_config("at least one method is required"));
        }
        if self.rho_grid.is_empty() || self.perturb_grid.is_empty() {
            return Err(Error::invalid_config("grids must be non-empty"));
        }
        if self.rho_grid.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::invalid_config("every rho must lie in (0, 1]"));
        }
        if self.perturb_grid.iter().any(|&p| !(0.0..1.0).contains(&p)) {
            return Err(Error::invalid_config("every p_perturb must lie in [0, 1)"));
        }
        if self.current_period < 2 || self.current_period > self.drift.periods {
            return Err(Error::invalid_config(
                "current_period must lie in 2..=L so at least one source period exists",
            ));
        }
        if self.eval_sample_size < 2 {
            return Err(Error::invalid_config("eval_sample_size must be >= 2"));
        }
        Ok(())
    }
}

/// Pre/post classification of a period relative to the perturbation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Pre,
    Post,
}

impl Regime {
    fn of(period: i64, perturb_time: usize) -> Regime {
        if period < perturb_time as i64 {
            Regime::Pre
        } else {
            Regime::Post
        }
    }
}

/// One evaluated (method, eval period) observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub train_period: i64,
    pub eval_period: i64,
    pub rho: f64,
    pub p_perturb: f64,
    pub rep: usize,
    pub auc: f64,
    pub train_regime: Regime,
    pub eval_regime: Regime,
}

/// A fit or evaluation that failed inside a sweep; the sweep continues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellFailure {
    pub rho: f64,
    pub p_perturb: f64,
    pub rep: usize,
    pub method: Option<String>,
    pub message: String,
}

/// Identity of one sweep cell.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CellDescriptor {
    pub rho_index: usize,
    pub perturb_index: usize,
    pub rep: usize,
    pub rho: f64,
    pub p_perturb: f64,
}

/// Rows and failures produced by one cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

/// Heavyweight per-cell outputs for persistence: fitted models, solve
/// diagnostics, and the raw score vectors behind every AUC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellArtifacts {
    pub models: Vec<(String, CoefficientVector)>,
    pub adapt_diagnostics: Option<AdaptDiagnostics>,
    /// (method, eval_period, scores); labels are shared per period.
    pub scores: Vec<(String, i64, Vec<f64>)>,
    /// (eval_period, labels)
    pub labels: Vec<(i64, Vec<f64>)>,
}

/// Persistence hook for sweep cells. Implementations must be safe to call
/// from worker threads. `load` returning a result skips recomputation,
/// which makes interrupted runs resumable.
pub trait CellStore: Sync {
    fn load(&self, cell: &CellDescriptor) -> Option<CellResult>;
    fn store(
        &self,
        cell: &CellDescriptor,
        result: &CellResult,
        artifacts: &CellArtifacts,
    ) -> Result<()>;
}

/// Extension point: additional estimators evaluated under the same row
/// schema as the built-in methods.
pub struct FitContext<'a> {
    pub sources: &'a [Dataset],
    pub source_models: &'a [SourceModel],
    pub target_train: &'a Dataset,
    pub link: LinkFunction,
    pub penalty: &'a PenaltyPolicy,
    pub seed: u64,
}

pub trait EstimatorPlugin: Sync {
    fn name(&self) -> &str;
    fn fit(&self, ctx: &FitContext<'_>) -> Result<CoefficientVector>;
}

/// Sweep output: all rows in deterministic order plus failure notes.
#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

// ---------------------------------------------------------------------------
// Splits and baselines
// ---------------------------------------------------------------------------

/// Randomly partitions rows into two disjoint subsets of sizes
/// (floor(fraction*n), n - floor(fraction*n)).
pub fn split_target(data: &Dataset, fraction: f64, rng_seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::invalid_config("split fraction must lie in (0, 1)"));
    }
    let n = data.n();
    let first = (fraction * n as f64).floor() as usize;
    if first == 0 || first == n {
        return Err(Error::DegenerateSplit { n, fraction });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(rng_seed, &[domain::SPLIT]));
    let mut left: Vec<usize> = idx[..first].to_vec();
    let mut right: Vec<usize> = idx[first..].to_vec();
    left.sort_unstable();
    right.sort_unstable();
    #[cfg(debug_assertions)]
    {
        let mut seen = vec![false; n];
        for &i in left.iter().chain(right.iter()) {
            debug_assert!(!seen[i], "split produced overlapping indices");
            seen[i] = true;
        }
        debug_assert!(seen.iter().all(|&s| s), "split must cover all rows");
    }
    Ok((data.select_rows(&left), data.select_rows(&right)))
}

/// Penalized fit on the current training data alone.
pub fn fit_target_only(
    target_train: &Dataset,
    link: LinkFunction,
    penalty: &PenaltyPolicy,
    seed: u64,
) -> Result<CoefficientVector> {
    penalty.fit(target_train, link, seed)
}

/// Single penalized fit on the row-concatenation of all sources and the
/// current training data.
pub fn fit_pooled(
    sources: &[Dataset],
    target_train: &Dataset,
    link: LinkFunction,
    penalty: &PenaltyPolicy,
    seed: u64,
) -> Result<CoefficientVector> {
    let mut parts: Vec<&Dataset> = sources.iter().collect();
    parts.push(target_train);
    let pooled = Dataset::concat(&parts)?;
    penalty.fit(&pooled, link, seed)
}

/// Keeps every case (y = 1) and samples up to `controls_per_case` controls
/// per case without replacement. Row order of the original data is kept.
pub fn downsample_controls(
    data: &Dataset,
    controls_per_case: usize,
    rng_seed: u64,
) -> Result<Dataset> {
    if controls_per_case < 1 {
        return Err(Error::invalid_config("controls_per_case must be >= 1"));
    }
    let mut cases = Vec::new();
    let mut controls = Vec::new();
    for (i, &y) in data.outcomes().iter().enumerate() {
        if y == 1.0 {
            cases.push(i);
        } else {
            controls.push(i);
        }
    }
    if cases.is_empty() {
        return Err(Error::NoCases);
    }
    let want = cases.len().saturating_mul(controls_per_case).min(controls.len());
    let mut rng = stream(rng_seed, &[domain::DOWNSAMPLE]);
    let chosen = rand::seq::index::sample(&mut rng, controls.len(), want);
    let mut keep: Vec<usize> = cases;
    keep.extend(chosen.iter().map(|k| controls[k]));
    keep.sort_unstable();
    Ok(data.select_rows(&keep))
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct CellComputation {
    result: CellResult,
    fitted: Vec<(String, CoefficientVector)>,
    adapt_diagnostics: Option<AdaptDiagnostics>,
    scenario: Option<Scenario>,
}

fn run_cell(
    config: &ExperimentConfig,
    cell: &CellDescriptor,
    plugins: &[&dyn EstimatorPlugin],
    keep_for_artifacts: bool,
) -> CellComputation {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let fail = |failures: &mut Vec<CellFailure>, method: Option<String>, message: String| {
        failures.push(CellFailure {
            rho: cell.rho,
            p_perturb: cell.p_perturb,
            rep: cell.rep,
            method,
            message,
        });
    };

    let cell_seed = derive_seed(
        config.seed,
        &[
            domain::SWEEP_CELL,
            cell.rho_index as u64,
            cell.perturb_index as u64,
            cell.rep as u64,
        ],
    );
    let drift = DriftConfig {
        rho: cell.rho,
        p_perturb: cell.p_perturb,
        seed: cell_seed,
        ..config.drift.clone()
    };
    let scenario: Scenario =
        match generate_scenario(&drift, config.current_period, config.eval_sample_size) {
            Ok(s) => s,
            Err(e) => {
                fail(&mut failures, None, e.to_string());
                return CellComputation {
                    result: CellResult { rows, failures },
                    fitted: Vec::new(),
                    adapt_diagnostics: None,
                    scenario: None,
                };
            }
        };

    // Evaluation data must never appear among the training sets.
    #[cfg(debug_assertions)]
    for eval in &scenario.evaluation {
        debug_assert!(scenario.historical.iter().all(|h| h != eval));
        debug_assert!(&scenario.current_train != eval);
    }

    let link = LinkFunction::Logistic;
    let train_period = config.current_period as i64;

    // Source fits are shared by the bank-based estimators.
    let needs_sources = config.methods.iter().any(|m| {
        matches!(m, Method::Adapt | Method::Maximin)
    }) || !plugins.is_empty();
    let mut source_models: Vec<SourceModel> = Vec::new();
    let mut sources_ok = true;
    if needs_sources {
        for (idx, src) in scenario.historical.iter().enumerate() {
            let seed = derive_seed(cell_seed, &[domain::PIPELINE_SOURCE, idx as u64]);
            match config.penalty.fit(src, link, seed) {
                Ok(beta) => source_models.push(SourceModel {
                    label: src.period_label().unwrap_or(idx as i64 + 1),
                    beta,
                }),
                Err(e) => {
                    sources_ok = false;
                    fail(
                        &mut failures,
                        None,
                        format!("source fit for period {} failed: {e}", idx + 1),
                    );
                    break;
                }
            }
        }
    }

    let mut fitted: Vec<(String, CoefficientVector)> = Vec::new();
    let mut adapt_diag: Option<AdaptDiagnostics> = None;
    for method in &config.methods {
        let outcome: Result<CoefficientVector> = match method {
            Method::TargetOnly => fit_target_only(
                &scenario.current_train,
                link,
                &config.penalty,
                derive_seed(cell_seed, &[domain::FIT_TARGET_ONLY]),
            ),
            Method::Pooled => fit_pooled(
                &scenario.historical,
                &scenario.current_train,
                link,
                &config.penalty,
                derive_seed(cell_seed, &[domain::FIT_POOLED]),
            ),
            Method::Adapt => {
                if !sources_ok {
                    continue;
                }
                let opts = PipelineOptions {
                    penalty: config.penalty,
                    ..PipelineOptions::default()
                };
                run_adapt_with_models(&source_models, &scenario.current_train, link, cell_seed, &opts)
                    .map(|fit| {
                        adapt_diag = Some(fit.diagnostics.clone());
                        fit.beta
                    })
            }
            Method::Maximin => {
                if !sources_ok {
                    continue;
                }
                ModelBank::new(
                    source_models.iter().map(|m| m.beta.clone()).collect(),
                    source_models.iter().map(|m| m.label).collect(),
                )
                .and_then(|bank| {
                    // Curvature of the loss at the null model on the full
                    // current training data.
                    let zero = CoefficientVector::zeros(scenario.current_train.p());
                    let h = hessian(&zero, &scenario.current_train, link)?;
                    maximin_estimate(&bank, &h).map(|(beta, _)| beta)
                })
            }
        };
        match outcome {
            Ok(beta) => fitted.push((method.name().to_string(), beta)),
            Err(e) => fail(&mut failures, Some(method.name().to_string()), e.to_string()),
        }
    }

    for plugin in plugins {
        let ctx = FitContext {
            sources: &scenario.historical,
            source_models: &source_models,
            target_train: &scenario.current_train,
            link,
            penalty: &config.penalty,
            seed: cell_seed,
        };
        match plugin.fit(&ctx) {
            Ok(beta) => fitted.push((plugin.name().to_string(), beta)),
            Err(e) => fail(&mut failures, Some(plugin.name().to_string()), e.to_string()),
        }
    }

    for (name, beta) in &fitted {
        for eval in &scenario.evaluation {
            let eval_period = eval.period_label().expect("evaluation sets carry periods");
            let value = predict_scores(beta, eval, link)
                .and_then(|s| auc(s.as_slice().unwrap(), eval.outcomes().as_slice().unwrap()));
            match value {
                Ok(a) => rows.push(ResultRow {
                    method: name.clone(),
                    train_period,
                    eval_period,
                    rho: cell.rho,
                    p_perturb: cell.p_perturb,
                    rep: cell.rep,
                    auc: a,
                    train_regime: Regime::of(train_period, config.drift.perturb_time),
                    eval_regime: Regime::of(eval_period, config.drift.perturb_time),
                }),
                Err(e) => fail(
                    &mut failures,
                    Some(name.clone()),
                    format!("evaluation at period {eval_period} failed: {e}"),
                ),
            }
        }
    }

    rows.sort_by(row_sort_key_cmp);
    CellComputation {
        result: CellResult { rows, failures },
        fitted,
        adapt_diagnostics: adapt_diag,
        scenario: keep_for_artifacts.then_some(scenario),
    }
}

fn collect_artifacts(computation: &CellComputation) -> CellArtifacts {
    let mut artifacts = CellArtifacts {
        models: computation.fitted.clone(),
        adapt_diagnostics: computation.adapt_diagnostics.clone(),
        scores: Vec::new(),
        labels: Vec::new(),
    };
    if let Some(scenario) = &computation.scenario {
        for eval in &scenario.evaluation {
            let period = eval.period_label().unwrap_or_default();
            artifacts.labels.push((period, eval.outcomes().to_vec()));
        }
        for (name, beta) in &computation.fitted {
            for eval in &scenario.evaluation {
                let period = eval.period_label().unwrap_or_default();
                if let Ok(s) = predict_scores(beta, eval, LinkFunction::Logistic) {
                    artifacts.scores.push((name.clone(), period, s.to_vec()));
                }
            }
        }
    }
    artifacts
}

fn row_sort_key_cmp(a: &ResultRow, b: &ResultRow) -> std::cmp::Ordering {
    (a.method.as_str(), a.eval_period).cmp(&(b.method.as_str(), b.eval_period))
}

fn run_sweep(
    config: &ExperimentConfig,
    cells: Vec<CellDescriptor>,
    plugins: &[&dyn EstimatorPlugin],
    store: Option<&dyn CellStore>,
) -> Result<SweepOutput> {
    config.validate()?;
    let results: Vec<(usize, CellResult)> = cells
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            if let Some(s) = store {
                if let Some(cached) = s.load(cell) {
                    return Ok((i, cached));
                }
                let computation = run_cell(config, cell, plugins, true);
                let artifacts = collect_artifacts(&computation);
                s.store(cell, &computation.result, &artifacts)?;
                Ok((i, computation.result))
            } else {
                Ok((i, run_cell(config, cell, plugins, false).result))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ordered = results;
    ordered.sort_by_key(|(i, _)| *i);
    let mut out = SweepOutput::default();
    for (_, cell_result) in ordered {
        out.rows.extend(cell_result.rows);
        out.failures.extend(cell_result.failures);
    }
    Ok(out)
}

/// Varies the current-to-historical ratio rho over the grid at the drift
/// config's fixed perturbation level.
pub fn run_rho_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    run_rho_sweep_with(config, &[], None)
}

pub fn run_rho_sweep_with(
    config: &ExperimentConfig,
    plugins: &[&dyn EstimatorPlugin],
    store: Option<&dyn CellStore>,
) -> Result<SweepOutput> {
    let mut cells = Vec::new();
    for (rho_index, &rho) in config.rho_grid.iter().enumerate() {
        for rep in 0..config.repetitions {
            cells.push(CellDescriptor {
                rho_index,
                perturb_index: 0,
                rep,
                rho,
                p_perturb: config.drift.p_perturb,
            });
        }
    }
    run_sweep(config, cells, plugins, store)
}

/// Varies the perturbation level over the grid at the drift config's fixed
/// rho (0.2 by default).
pub fn run_perturb_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    run_perturb_sweep_with(config, &[], None)
}

pub fn run_perturb_sweep_with(
    config: &ExperimentConfig,
    plugins: &[&dyn EstimatorPlugin],
    store: Option<&dyn CellStore>,
) -> Result<SweepOutput> {
    let mut cells = Vec::new();
    for (perturb_index, &p_perturb) in config.perturb_grid.iter().enumerate() {
        for rep in 0..config.repetitions {
            cells.push(CellDescriptor {
                rho_index: 0,
                perturb_index,
                rep,
                rho: config.drift.rho,
                p_perturb,
            });
        }
    }
    run_sweep(config, cells, plugins, store)
}

/// Per-cell mean/sd aggregate of a sweep's rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub rho: f64,
    pub p_perturb: f64,
    pub train_period: i64,
    pub eval_period: i64,
    pub n_reps: usize,
    pub mean_auc: f64,
    pub sd_auc: f64,
}

/// Groups rows by (method, rho, p_perturb, train, eval) and reports the
/// mean and sample standard deviation over repetitions.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    #[allow(clippy::type_complexity)]
    let mut groups: BTreeMap<(String, u64, u64, i64, i64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((
                r.method.clone(),
                r.rho.to_bits(),
                r.p_perturb.to_bits(),
                r.train_period,
                r.eval_period,
            ))
            .or_default()
            .push(r.auc);
    }
    groups
        .into_iter()
        .map(|((method, rho_bits, pp_bits, train, eval), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            SummaryRow {
                method,
                rho: f64::from_bits(rho_bits),
                p_perturb: f64::from_bits(pp_bits),
                train_period: train,
                eval_period: eval,
                n_reps: n,
                mean_auc: mean,
                sd_auc: sd,
            }
        })
        .collect()
}

/// Recomputes an AUC from persisted artifact scores (spot-check support).
pub fn auc_from_artifacts(artifacts: &CellArtifacts, method: &str, eval_period: i64) -> Option<f64> {
    let scores = artifacts
        .scores
        .iter()
        .find(|(m, p, _)| m == method && *p == eval_period)
        .map(|(_, _, s)| s)?;
    let labels = artifacts
        .labels
        .iter()
        .find(|(p, _)| *p == eval_period)
        .map(|(_, l)| l)?;
    auc(scores, labels).ok()
}
