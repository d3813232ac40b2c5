//! Drift-robust transfer estimation for generalized linear models.
//!
//! The crate fits penalized period-specific GLMs, aggregates them through
//! convex combinations constrained to fit held-out current data, and solves
//! an anchored worst-case quadratic to produce coefficients that stay
//! accurate on the current population while hedging against plausible
//! future drift. A synthetic drift generator, evaluation metrics, and a
//! seeded benchmark harness round out the toolkit.

pub mod adapt;
pub mod data;
pub mod error;
pub mod glm;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod penalized;
pub mod rng;
pub mod sim;
pub mod simplex;

pub use adapt::{
    adapt_estimate, best_source_combination, combine, maximin_estimate, run_adapt_pipeline,
    run_adapt_pipeline_full, select_tau, AdaptDiagnostics, AdaptFit, AdaptSolution, AnchorChoice,
    BankComposition, ModelBank, PenaltyPolicy, PipelineOptions, SourceModel, UncertaintySet,
};
pub use data::Dataset;
pub use error::{Error, Result};
pub use glm::{
    gradient, hessian, negative_log_likelihood, predict_scores, CoefficientVector, LinkFunction,
};
pub use harness::{
    downsample_controls, fit_pooled, fit_target_only, run_perturb_sweep, run_rho_sweep,
    split_target, summarize, ExperimentConfig, Method, ResultRow, SweepOutput,
};
pub use metrics::{aging_effect, auc, worst_future_auc, AucTable};
pub use penalized::{cross_validate_lambda, fit_penalized, PenaltyConfig};
pub use sim::{
    generate_coefficient_path, generate_dataset, generate_scenario, CoefficientPath, DriftConfig,
    Scenario,
};
pub use simplex::SimplexWeights;
