//! Drift-robust transfer estimation over a bank of period models.
//!
//! The estimator aggregates a current-target model and historical source
//! models through convex combinations. Combinations that fit a held-out
//! slice of current data well enough (loss at most `tau`) form the
//! uncertainty set of plausible futures; the final coefficients minimize a
//! Hessian-weighted quadratic distance to an anchor model over that set.
//! The constrained solve runs by Lagrangian bisection on the multiplier of
//! the loss constraint, with each inner problem solved on the simplex.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{
    hessian, negative_log_likelihood, nll_from_eta, sigmoid, CoefficientVector, LinkFunction,
};
use crate::penalized::{cross_validate_lambda_with, fit_penalized, PenaltyConfig};
use crate::rng::{derive_seed, domain};
use crate::simplex::{
    kkt_residual, minimize_on_simplex_from, SimplexObjective, SimplexSolution, SimplexWeights,
    SolveOptions,
};

/// Ridge added to the Hessian in every quadratic form, guaranteeing strict
/// convexity in the coefficients under collinear banks.
pub const HESSIAN_RIDGE: f64 = 1e-8;

/// Membership slack for the uncertainty-set loss constraint.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Column-stacked candidate coefficient vectors. By convention column 1 is
/// the current-target estimate and the remaining columns are source
/// estimates in ascending period order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBank {
    columns: Vec<CoefficientVector>,
    labels: Vec<i64>,
}

impl ModelBank {
    pub fn new(columns: Vec<CoefficientVector>, labels: Vec<i64>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::EmptyBank);
        }
        if labels.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                context: "bank labels vs columns",
                expected: columns.len(),
                got: labels.len(),
            });
        }
        let dim = columns[0].dim();
        for c in &columns {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "bank column dimension",
                    expected: dim,
                    got: c.dim(),
                });
            }
        }
        Ok(ModelBank { columns, labels })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Slope dimension p shared by all columns.
    pub fn dim(&self) -> usize {
        self.columns[0].dim()
    }

    pub fn columns(&self) -> &[CoefficientVector] {
        &self.columns
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn column(&self, k: usize) -> &CoefficientVector {
        &self.columns[k]
    }

    /// Intercept-augmented (p+1) x K matrix of the columns.
    pub fn as_matrix(&self) -> Array2<f64> {
        let mut b = Array2::zeros((self.dim() + 1, self.width()));
        for (k, col) in self.columns.iter().enumerate() {
            b[[0, k]] = col.intercept;
            for j in 0..self.dim() {
                b[[j + 1, k]] = col.slopes[j];
            }
        }
        b
    }

    /// Index of the first column exactly equal to `beta`, if any.
    fn index_of(&self, beta: &CoefficientVector) -> Option<usize> {
        self.columns.iter().position(|c| {
            c.intercept == beta.intercept
                && c.slopes.len() == beta.slopes.len()
                && c.slopes.iter().zip(beta.slopes.iter()).all(|(a, b)| a == b)
        })
    }
}

/// The convex combination `B * gamma`, intercept included.
pub fn combine(bank: &ModelBank, weights: &SimplexWeights) -> Result<CoefficientVector> {
    if weights.len() != bank.width() {
        return Err(Error::DimensionMismatch {
            context: "weight length vs bank width",
            expected: bank.width(),
            got: weights.len(),
        });
    }
    let mut intercept = 0.0;
    let mut slopes = Array1::zeros(bank.dim());
    for (k, col) in bank.columns.iter().enumerate() {
        let g = weights.as_slice()[k];
        intercept += g * col.intercept;
        slopes.scaled_add(g, &col.slopes);
    }
    CoefficientVector::new(intercept, slopes)
}

/// Plausible-future models: combinations `B * gamma` whose mean loss on the
/// held-out evaluation data does not exceed `tau`.
pub struct UncertaintySet<'a> {
    pub bank: &'a ModelBank,
    pub tau: f64,
    pub eval_data: &'a Dataset,
    pub link: LinkFunction,
}

impl UncertaintySet<'_> {
    /// Membership test with the documented slack.
    pub fn contains(&self, weights: &SimplexWeights) -> Result<bool> {
        let beta = combine(self.bank, weights)?;
        let loss = negative_log_likelihood(&beta, self.eval_data, self.link)?;
        Ok(loss <= self.tau + FEASIBILITY_TOL)
    }
}

/// Mid-point loss threshold: the average of the held-out losses of the
/// current-target estimate and the best source combination. Never below the
/// better of the two, so the set it induces is non-empty.
pub fn select_tau(
    target_est: &CoefficientVector,
    beta_tilde: &CoefficientVector,
    eval_data: &Dataset,
    link: LinkFunction,
) -> Result<f64> {
    let l1 = negative_log_likelihood(target_est, eval_data, link)?;
    let l2 = negative_log_likelihood(beta_tilde, eval_data, link)?;
    Ok(0.5 * (l1 + l2))
}

// ---------------------------------------------------------------------------
// Objective pieces over the simplex
// ---------------------------------------------------------------------------

/// Quadratic (anchor - B gamma)' H (anchor - B gamma), reduced to
/// gamma' M gamma - 2 c' gamma + q0.
struct QuadPart {
    m: Array2<f64>,
    c: Array1<f64>,
    q0: f64,
}

impl QuadPart {
    fn build(bank_matrix: &Array2<f64>, hess_reg: &Array2<f64>, anchor_aug: &Array1<f64>) -> Self {
        let hb = hess_reg.dot(bank_matrix); // (p+1) x K
        let m = bank_matrix.t().dot(&hb);
        let ha = hess_reg.dot(anchor_aug);
        let c = bank_matrix.t().dot(&ha);
        let q0 = anchor_aug.dot(&ha);
        QuadPart { m, c, q0 }
    }

    fn value(&self, gamma: &Array1<f64>) -> f64 {
        gamma.dot(&self.m.dot(gamma)) - 2.0 * self.c.dot(gamma) + self.q0
    }
}

/// Mean NLL of `B gamma` on fixed data, as a function of gamma, via the
/// precomputed per-column linear predictors S = X~ B.
struct LikPart<'a> {
    s: Array2<f64>, // n x K
    y: &'a Array1<f64>,
    link: LinkFunction,
}

impl<'a> LikPart<'a> {
    fn build(bank: &ModelBank, data: &'a Dataset, link: LinkFunction) -> Result<Self> {
        data.check_outcomes(link)?;
        if bank.dim() != data.p() {
            return Err(Error::DimensionMismatch {
                context: "bank dimension vs eval data",
                expected: data.p(),
                got: bank.dim(),
            });
        }
        let k = bank.width();
        let n = data.n();
        let mut s = Array2::zeros((n, k));
        for (kk, col) in bank.columns.iter().enumerate() {
            let eta = crate::glm::linear_predictor(col, data);
            s.column_mut(kk).assign(&eta);
        }
        Ok(LikPart {
            s,
            y: data.outcomes(),
            link,
        })
    }

    fn value(&self, gamma: &Array1<f64>) -> f64 {
        let eta = self.s.dot(gamma);
        nll_from_eta(&eta, self.y, self.link)
    }

    fn grad(&self, gamma: &Array1<f64>) -> Array1<f64> {
        let n = self.y.len() as f64;
        let eta = self.s.dot(gamma);
        let mut r = Array1::zeros(self.y.len());
        for i in 0..self.y.len() {
            r[i] = self.link.mean(eta[i]) - self.y[i];
        }
        self.s.t().dot(&r) / n
    }

    fn hess(&self, gamma: &Array1<f64>) -> Array2<f64> {
        let n = self.y.len() as f64;
        let k = self.s.ncols();
        let w: Array1<f64> = match self.link {
            LinkFunction::Logistic => {
                let eta = self.s.dot(gamma);
                eta.mapv(|e| {
                    let m = sigmoid(e);
                    m * (1.0 - m)
                })
            }
            LinkFunction::Identity => Array1::ones(self.y.len()),
        };
        let mut h = Array2::zeros((k, k));
        for a in 0..k {
            for b in a..k {
                let mut acc = 0.0;
                for i in 0..self.y.len() {
                    acc += w[i] * self.s[[i, a]] * self.s[[i, b]];
                }
                h[[a, b]] = acc / n;
                h[[b, a]] = h[[a, b]];
            }
        }
        h
    }
}

/// quad + mu * likelihood, either part optional.
struct ComboObjective<'a, 'b> {
    quad: Option<&'a QuadPart>,
    lik: Option<(&'a LikPart<'b>, f64)>,
}

impl SimplexObjective for ComboObjective<'_, '_> {
    fn value(&self, gamma: &[f64]) -> f64 {
        let g = Array1::from_vec(gamma.to_vec());
        let mut v = 0.0;
        if let Some(q) = self.quad {
            v += q.value(&g);
        }
        if let Some((l, mu)) = self.lik {
            v += mu * l.value(&g);
        }
        v
    }

    fn gradient(&self, gamma: &[f64], out: &mut [f64]) {
        let g = Array1::from_vec(gamma.to_vec());
        let mut acc = Array1::zeros(gamma.len());
        if let Some(q) = self.quad {
            acc += &(2.0 * (q.m.dot(&g) - &q.c));
        }
        if let Some((l, mu)) = self.lik {
            acc.scaled_add(mu, &l.grad(&g));
        }
        out.copy_from_slice(acc.as_slice().unwrap());
    }

    fn hessian(&self, gamma: &[f64]) -> Option<Array2<f64>> {
        let g = Array1::from_vec(gamma.to_vec());
        let mut h = Array2::zeros((gamma.len(), gamma.len()));
        if let Some(q) = self.quad {
            h += &(2.0 * &q.m);
        }
        if let Some((l, mu)) = self.lik {
            h.scaled_add(mu, &l.hess(&g));
        }
        Some(h)
    }
}

fn regularized_hessian(hess: &Array2<f64>, dim: usize) -> Result<Array2<f64>> {
    if hess.nrows() != dim + 1 || hess.ncols() != dim + 1 {
        return Err(Error::DimensionMismatch {
            context: "hessian shape vs coefficient dimension",
            expected: dim + 1,
            got: hess.nrows(),
        });
    }
    let mut max_asym = 0.0f64;
    for i in 0..hess.nrows() {
        for j in i + 1..hess.ncols() {
            max_asym = max_asym.max((hess[[i, j]] - hess[[j, i]]).abs());
        }
    }
    if max_asym > 1e-8 {
        return Err(Error::invalid_config("hessian must be symmetric"));
    }
    let mut h = hess.clone();
    for i in 0..h.nrows() {
        h[[i, i]] += HESSIAN_RIDGE;
    }
    Ok(h)
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

/// Solve details for the constrained quadratic estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptDiagnostics {
    /// Final quadratic objective (anchor - B gamma)' H~ (anchor - B gamma).
    pub objective: f64,
    /// Held-out loss of the returned combination, when a constraint exists.
    pub constraint_value: Option<f64>,
    /// tau minus the constraint value (nonnegative at a feasible solution).
    pub constraint_slack: Option<f64>,
    /// Final Lagrange multiplier of the loss constraint.
    pub mu: f64,
    /// Total inner-solver iterations across all multiplier solves.
    pub iterations: usize,
    /// Bisection steps on the multiplier.
    pub bisection_steps: usize,
    /// Stationarity residual of the Lagrangian in the simplex tangent space.
    pub kkt_residual: f64,
    /// Indices of weights at their zero bound.
    pub active_weight_bounds: Vec<usize>,
    /// Whether the loss constraint is active at the solution.
    pub likelihood_constraint_active: bool,
    /// Whether the anchor itself was feasible and returned exactly.
    pub anchor_absorbed: bool,
}

/// Result of [`adapt_estimate`].
#[derive(Debug, Clone)]
pub struct AdaptSolution {
    pub beta: CoefficientVector,
    pub weights: SimplexWeights,
    pub diagnostics: AdaptDiagnostics,
}

fn active_bounds(gamma: &[f64]) -> Vec<usize> {
    gamma
        .iter()
        .enumerate()
        .filter(|(_, &g)| g <= 1e-10)
        .map(|(k, _)| k)
        .collect()
}

/// Minimizes `(anchor - B gamma)' H~ (anchor - B gamma)` over the weights
/// whose combination stays inside the uncertainty set.
///
/// When the anchor is itself a feasible bank column the solve is exact and
/// immediate: the quadratic attains zero there. Otherwise the loss
/// constraint is handled by bisecting its Lagrange multiplier.
pub fn adapt_estimate(
    set: &UncertaintySet<'_>,
    anchor: &CoefficientVector,
    hess: &Array2<f64>,
) -> Result<AdaptSolution> {
    let bank = set.bank;
    if anchor.dim() != bank.dim() {
        return Err(Error::DimensionMismatch {
            context: "anchor dimension vs bank",
            expected: bank.dim(),
            got: anchor.dim(),
        });
    }
    let h = regularized_hessian(hess, bank.dim())?;
    let lik = LikPart::build(bank, set.eval_data, set.link)?;

    // Exact shortcut: a feasible anchor column minimizes the quadratic at 0.
    if let Some(k) = bank.index_of(anchor) {
        let gamma = SimplexWeights::unit(bank.width(), k);
        let gvec = Array1::from_vec(gamma.as_slice().to_vec());
        let loss = lik.value(&gvec);
        if loss <= set.tau + FEASIBILITY_TOL {
            return Ok(AdaptSolution {
                beta: anchor.clone(),
                weights: gamma.clone(),
                diagnostics: AdaptDiagnostics {
                    objective: 0.0,
                    constraint_value: Some(loss),
                    constraint_slack: Some(set.tau - loss),
                    mu: 0.0,
                    iterations: 0,
                    bisection_steps: 0,
                    kkt_residual: 0.0,
                    active_weight_bounds: active_bounds(gamma.as_slice()),
                    likelihood_constraint_active: false,
                    anchor_absorbed: true,
                },
            });
        }
    }

    let bank_matrix = bank.as_matrix();
    let quad = QuadPart::build(&bank_matrix, &h, &anchor.to_augmented());
    let opts = SolveOptions::default();

    let mut total_iters = 0usize;

    // Unconstrained-over-the-simplex solve (mu = 0).
    let base = ComboObjective {
        quad: Some(&quad),
        lik: None,
    };
    let sol0 = minimize_on_simplex_from(&base, SimplexWeights::uniform(bank.width()).as_slice().to_vec(), &opts);
    total_iters += sol0.iterations;
    let g0 = Array1::from_vec(sol0.gamma.clone());
    let loss0 = lik.value(&g0);
    if loss0 <= set.tau + FEASIBILITY_TOL {
        let weights = SimplexWeights::new(sol0.gamma.clone())?;
        let beta = combine(bank, &weights)?;
        return Ok(AdaptSolution {
            beta,
            weights,
            diagnostics: AdaptDiagnostics {
                objective: quad.value(&g0),
                constraint_value: Some(loss0),
                constraint_slack: Some(set.tau - loss0),
                mu: 0.0,
                iterations: total_iters,
                bisection_steps: 0,
                kkt_residual: sol0.kkt_residual,
                active_weight_bounds: active_bounds(&sol0.gamma),
                likelihood_constraint_active: false,
                anchor_absorbed: false,
            },
        });
    }

    // The constraint is active: bisect the multiplier. Loss at the penalized
    // minimizer is non-increasing in mu.
    let solve_mu = |mu: f64, start: Vec<f64>, iters: &mut usize| -> (Vec<f64>, f64) {
        let objective = ComboObjective {
            quad: Some(&quad),
            lik: Some((&lik, mu)),
        };
        let sol = minimize_on_simplex_from(&objective, start, &opts);
        *iters += sol.iterations;
        let g = Array1::from_vec(sol.gamma.clone());
        let loss = lik.value(&g);
        (sol.gamma, loss)
    };

    let mut mu_lo = 0.0f64;
    let mut mu_hi = 1.0f64;
    let mut gamma_hi;
    let mut loss_hi;
    let mut start = sol0.gamma.clone();
    let mut bisection_steps = 0usize;
    loop {
        let (g, loss) = solve_mu(mu_hi, start.clone(), &mut total_iters);
        bisection_steps += 1;
        if loss <= set.tau {
            gamma_hi = g;
            loss_hi = loss;
            break;
        }
        start = g;
        mu_lo = mu_hi;
        mu_hi *= 4.0;
        if mu_hi > 1e15 {
            // Even an (effectively) pure loss minimization cannot reach tau:
            // the set is genuinely infeasible.
            let pure = ComboObjective {
                quad: None,
                lik: Some((&lik, 1.0)),
            };
            let sol = minimize_on_simplex_from(&pure, start.clone(), &opts);
            total_iters += sol.iterations;
            let g = Array1::from_vec(sol.gamma.clone());
            let min_loss = lik.value(&g);
            if min_loss > set.tau + 1e-6 {
                return Err(Error::InfeasibleSet {
                    min_loss,
                    tau: set.tau,
                });
            }
            gamma_hi = sol.gamma;
            loss_hi = min_loss;
            break;
        }
    }

    let mut mu_final = mu_hi;
    let mut gamma_final = gamma_hi.clone();
    let mut loss_final = loss_hi;
    for _ in 0..200 {
        let gap = set.tau - loss_final;
        if gap >= 0.0 && gap <= 1e-6 && mu_final * gap <= 5e-9 {
            break;
        }
        if mu_hi - mu_lo <= 1e-13 * mu_hi.max(1.0) {
            break;
        }
        let mu_mid = 0.5 * (mu_lo + mu_hi);
        let (g, loss) = solve_mu(mu_mid, gamma_final.clone(), &mut total_iters);
        bisection_steps += 1;
        if loss <= set.tau {
            mu_hi = mu_mid;
            gamma_hi = g.clone();
            loss_hi = loss;
            mu_final = mu_mid;
            gamma_final = g;
            loss_final = loss;
        } else {
            mu_lo = mu_mid;
        }
    }
    // Always return the feasible endpoint of the bracket.
    if loss_final > set.tau {
        mu_final = mu_hi;
        gamma_final = gamma_hi;
        loss_final = loss_hi;
    }

    let g = Array1::from_vec(gamma_final.clone());
    let lagrangian = ComboObjective {
        quad: Some(&quad),
        lik: Some((&lik, mu_final)),
    };
    let mut grad = vec![0.0; bank.width()];
    lagrangian.gradient(&gamma_final, &mut grad);
    let kkt = kkt_residual(&gamma_final, &grad);

    let weights = SimplexWeights::new(gamma_final.clone())?;
    let beta = combine(bank, &weights)?;
    Ok(AdaptSolution {
        beta,
        weights,
        diagnostics: AdaptDiagnostics {
            objective: quad.value(&g),
            constraint_value: Some(loss_final),
            constraint_slack: Some(set.tau - loss_final),
            mu: mu_final,
            iterations: total_iters,
            bisection_steps,
            kkt_residual: kkt,
            active_weight_bounds: active_bounds(&gamma_final),
            likelihood_constraint_active: true,
            anchor_absorbed: false,
        },
    })
}

/// The group-robust aggregate: minimizes `gamma' B' H~ B gamma` over the
/// simplex — the quadratic form with a zero anchor and no loss constraint.
pub fn maximin_estimate(
    source_bank: &ModelBank,
    hess: &Array2<f64>,
) -> Result<(CoefficientVector, SimplexWeights)> {
    let h = regularized_hessian(hess, source_bank.dim())?;
    let zero = CoefficientVector::zeros(source_bank.dim());

    if let Some(k) = source_bank.index_of(&zero) {
        let weights = SimplexWeights::unit(source_bank.width(), k);
        return Ok((zero, weights));
    }

    let bank_matrix = source_bank.as_matrix();
    let quad = QuadPart::build(&bank_matrix, &h, &zero.to_augmented());
    let objective = ComboObjective {
        quad: Some(&quad),
        lik: None,
    };
    let sol: SimplexSolution = minimize_on_simplex_from(
        &objective,
        SimplexWeights::uniform(source_bank.width()).as_slice().to_vec(),
        &SolveOptions::default(),
    );
    let weights = SimplexWeights::new(sol.gamma)?;
    let beta = combine(source_bank, &weights)?;
    Ok((beta, weights))
}

/// Best convex combination of source models by held-out fit: the argmin of
/// the mean NLL of `B_src gamma` over the simplex.
pub fn best_source_combination(
    source_bank: &ModelBank,
    eval_data: &Dataset,
    link: LinkFunction,
) -> Result<(SimplexWeights, CoefficientVector)> {
    if source_bank.width() == 1 {
        let weights = SimplexWeights::unit(1, 0);
        let beta = source_bank.column(0).clone();
        return Ok((weights, beta));
    }
    let lik = LikPart::build(source_bank, eval_data, link)?;
    let objective = ComboObjective {
        quad: None,
        lik: Some((&lik, 1.0)),
    };
    let sol = minimize_on_simplex_from(
        &objective,
        SimplexWeights::uniform(source_bank.width()).as_slice().to_vec(),
        &SolveOptions::default(),
    );
    let weights = SimplexWeights::new(sol.gamma)?;
    let beta = combine(source_bank, &weights)?;
    Ok((weights, beta))
}

// ---------------------------------------------------------------------------
// End-to-end pipeline
// ---------------------------------------------------------------------------

/// Shared penalized-fit policy for every model fitted during a pipeline or
/// benchmark run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PenaltyPolicy {
    pub mixing: f64,
    pub folds: usize,
    pub grid_size: usize,
    pub standardize: bool,
}

impl Default for PenaltyPolicy {
    fn default() -> Self {
        PenaltyPolicy {
            mixing: 1.0,
            folds: 5,
            grid_size: 30,
            standardize: true,
        }
    }
}

impl PenaltyPolicy {
    /// Cross-validates lambda on `data` and fits at the selected value.
    pub fn fit(&self, data: &Dataset, link: LinkFunction, seed: u64) -> Result<CoefficientVector> {
        let chosen = cross_validate_lambda_with(
            data,
            link,
            self.mixing,
            self.folds,
            self.grid_size,
            seed,
            self.standardize,
        )?;
        fit_penalized(data, link, &chosen)
    }

    /// Fits at a fixed penalty without cross-validation.
    pub fn fit_at(
        &self,
        data: &Dataset,
        link: LinkFunction,
        lambda: f64,
    ) -> Result<CoefficientVector> {
        let cfg = PenaltyConfig::new(lambda, self.mixing, self.standardize)?;
        fit_penalized(data, link, &cfg)
    }
}

/// Anchor model for the quadratic objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorChoice {
    /// The current-target estimate fitted on the estimation half (default).
    Target,
    /// The zero coefficient vector, with the Hessian taken at zero on the
    /// full current training data.
    Zero,
    /// The best source combination.
    SourceCombo,
}

/// Which columns enter the bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankComposition {
    /// Target estimate first, then sources (default).
    TargetAndSources,
    /// Source columns only.
    SourcesOnly,
}

/// Pipeline knobs beyond the penalty policy.
#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    pub penalty: PenaltyPolicy,
    pub split_fraction: f64,
    pub anchor: AnchorChoice,
    pub bank: BankComposition,
    /// Overrides the mid-point tau rule; may be infinite.
    pub tau_override: Option<f64>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            penalty: PenaltyPolicy::default(),
            split_fraction: 0.5,
            anchor: AnchorChoice::Target,
            bank: BankComposition::TargetAndSources,
            tau_override: None,
        }
    }
}

/// Everything produced by one pipeline run.
#[derive(Debug, Clone)]
pub struct AdaptFit {
    pub beta: CoefficientVector,
    pub weights: SimplexWeights,
    pub tau: f64,
    pub diagnostics: AdaptDiagnostics,
    pub bank: ModelBank,
    /// Current-target estimate fitted on the estimation half.
    pub target_estimate: CoefficientVector,
    /// Best source combination and its weights.
    pub source_combo: CoefficientVector,
}

/// A fitted source model tagged with its period.
#[derive(Debug, Clone)]
pub struct SourceModel {
    pub label: i64,
    pub beta: CoefficientVector,
}

/// Runs the three estimation steps end to end: fit period models, build the
/// bank and the uncertainty set, then solve the anchored quadratic. Fully
/// deterministic given `split_seed`.
pub fn run_adapt_pipeline(
    sources: &[Dataset],
    target: &Dataset,
    link: LinkFunction,
    split_seed: u64,
    penalty: &PenaltyPolicy,
) -> Result<CoefficientVector> {
    let opts = PipelineOptions {
        penalty: *penalty,
        ..PipelineOptions::default()
    };
    run_adapt_pipeline_full(sources, target, link, split_seed, &opts).map(|fit| fit.beta)
}

/// As [`run_adapt_pipeline`], returning the full fit with diagnostics.
pub fn run_adapt_pipeline_full(
    sources: &[Dataset],
    target: &Dataset,
    link: LinkFunction,
    split_seed: u64,
    opts: &PipelineOptions,
) -> Result<AdaptFit> {
    if sources.is_empty() {
        return Err(Error::invalid_config("the pipeline requires at least one source dataset"));
    }
    let mut models = Vec::with_capacity(sources.len());
    for (idx, src) in sources.iter().enumerate() {
        let seed = derive_seed(split_seed, &[domain::PIPELINE_SOURCE, idx as u64]);
        let beta = opts.penalty.fit(src, link, seed)?;
        let label = src.period_label().unwrap_or(idx as i64);
        models.push(SourceModel { label, beta });
    }
    run_adapt_with_models(&models, target, link, split_seed, opts)
}

/// Pipeline entry point for callers that already hold fitted source models
/// (benchmark sweeps share source fits across estimators).
pub fn run_adapt_with_models(
    source_models: &[SourceModel],
    target: &Dataset,
    link: LinkFunction,
    split_seed: u64,
    opts: &PipelineOptions,
) -> Result<AdaptFit> {
    if source_models.is_empty() {
        return Err(Error::invalid_config("the pipeline requires at least one source model"));
    }
    if target.n() < 20 {
        return Err(Error::invalid_config("target must have n >= 20 to split"));
    }

    // Sources in ascending period order when labels are informative.
    let mut ordered: Vec<&SourceModel> = source_models.iter().collect();
    ordered.sort_by_key(|m| m.label);

    let (d1, d2) = crate::harness::split_target(
        target,
        opts.split_fraction,
        derive_seed(split_seed, &[domain::SPLIT]),
    )?;

    let target_seed = derive_seed(split_seed, &[domain::PIPELINE_TARGET]);
    let target_estimate = opts.penalty.fit(&d1, link, target_seed)?;

    let source_bank = ModelBank::new(
        ordered.iter().map(|m| m.beta.clone()).collect(),
        ordered.iter().map(|m| m.label).collect(),
    )?;
    // The combination weights are fitted on the estimation half; the
    // held-out half is reserved for the threshold and the constraint.
    let (combo_weights, beta_tilde) = best_source_combination(&source_bank, &d1, link)?;

    let tau = match opts.tau_override {
        Some(t) => t,
        None => select_tau(&target_estimate, &beta_tilde, &d2, link)?,
    };

    let (bank, target_in_bank) = match opts.bank {
        BankComposition::TargetAndSources => {
            let mut cols = vec![target_estimate.clone()];
            cols.extend(ordered.iter().map(|m| m.beta.clone()));
            let mut labels = vec![target.period_label().unwrap_or(i64::MAX)];
            labels.extend(ordered.iter().map(|m| m.label));
            (ModelBank::new(cols, labels)?, true)
        }
        BankComposition::SourcesOnly => (source_bank.clone(), false),
    };

    let anchor = match opts.anchor {
        AnchorChoice::Target => target_estimate.clone(),
        AnchorChoice::Zero => CoefficientVector::zeros(target.p()),
        AnchorChoice::SourceCombo => beta_tilde.clone(),
    };
    // The curvature is measured at the anchor. For the zero anchor the
    // expansion is around the null model on the full current training data;
    // otherwise it is taken on the estimation half.
    let hess = match opts.anchor {
        AnchorChoice::Zero => hessian(&anchor, target, link)?,
        _ => hessian(&anchor, &d1, link)?,
    };

    let set = UncertaintySet {
        bank: &bank,
        tau,
        eval_data: &d2,
        link,
    };

    // Under the mid-point rule at least one of the defining models is
    // feasible, so the set cannot be empty.
    if opts.tau_override.is_none() && opts.bank == BankComposition::TargetAndSources {
        let anchor_w = SimplexWeights::unit(bank.width(), 0);
        let mut combo_full = vec![0.0; bank.width()];
        combo_full[1..].copy_from_slice(combo_weights.as_slice());
        let combo_w = SimplexWeights::new(combo_full)?;
        assert!(
            set.contains(&anchor_w)? || set.contains(&combo_w)?,
            "uncertainty set unexpectedly empty under the mid-point tau rule"
        );
    }

    let solution = adapt_estimate(&set, &anchor, &hess)?;
    let _ = target_in_bank;

    Ok(AdaptFit {
        beta: solution.beta,
        weights: solution.weights,
        tau,
        diagnostics: solution.diagnostics,
        bank,
        target_estimate,
        source_combo: beta_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cv(intercept: f64, slopes: &[f64]) -> CoefficientVector {
        CoefficientVector::new(intercept, Array1::from_vec(slopes.to_vec())).unwrap()
    }

    fn random_logistic(n: usize, beta: &CoefficientVector, seed: u64) -> Dataset {
        let mut rng = crate::rng::stream(seed, &[77]);
        let p = beta.dim();
        let mut x = Array2::zeros((n, p));
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut y = Array1::zeros(n);
        for i in 0..n {
            let eta: f64 =
                beta.intercept + (0..p).map(|j| x[[i, j]] * beta.slopes[j]).sum::<f64>();
            y[i] = if rng.gen::<f64>() < sigmoid(eta) { 1.0 } else { 0.0 };
        }
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn combine_unit_weight_returns_column() {
        let bank = ModelBank::new(vec![cv(0.1, &[1.0, 2.0]), cv(-0.5, &[0.0, 3.0])], vec![1, 2]).unwrap();
        let out = combine(&bank, &SimplexWeights::unit(2, 0)).unwrap();
        assert_eq!(out, *bank.column(0));
    }

    #[test]
    fn combine_identical_columns_any_weights() {
        let col = cv(0.3, &[1.0, -1.0]);
        let bank = ModelBank::new(vec![col.clone(), col.clone()], vec![1, 2]).unwrap();
        let w = SimplexWeights::new(vec![0.3, 0.7]).unwrap();
        let out = combine(&bank, &w).unwrap();
        assert!(out.max_abs_diff(&col) < 1e-15);
    }

    #[test]
    fn combine_blends_coordinatewise() {
        let b1 = cv(1.0, &[2.0, 0.0]);
        let b2 = cv(-1.0, &[0.0, 4.0]);
        let bank = ModelBank::new(vec![b1, b2], vec![1, 2]).unwrap();
        let w = SimplexWeights::new(vec![0.25, 0.75]).unwrap();
        let out = combine(&bank, &w).unwrap();
        assert!((out.intercept - (0.25 - 0.75)).abs() < 1e-15);
        assert!((out.slopes[0] - 0.5).abs() < 1e-15);
        assert!((out.slopes[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn select_tau_is_midpoint_and_dominates_min() {
        // Construct two models with known held-out losses and check the rule.
        let truth = cv(0.0, &[1.0, -0.5]);
        let data = random_logistic(400, &truth, 5);
        let a = cv(0.0, &[1.0, -0.5]);
        let b = cv(0.0, &[0.0, 0.0]);
        let la = negative_log_likelihood(&a, &data, LinkFunction::Logistic).unwrap();
        let lb = negative_log_likelihood(&b, &data, LinkFunction::Logistic).unwrap();
        let tau = select_tau(&a, &b, &data, LinkFunction::Logistic).unwrap();
        assert!((tau - 0.5 * (la + lb)).abs() < 1e-15);
        assert!(tau >= la.min(lb));
    }

    #[test]
    fn select_tau_equal_losses() {
        let truth = cv(0.0, &[0.8]);
        let data = random_logistic(100, &truth, 9);
        let a = cv(0.2, &[0.4]);
        let tau = select_tau(&a, &a, &data, LinkFunction::Logistic).unwrap();
        let la = negative_log_likelihood(&a, &data, LinkFunction::Logistic).unwrap();
        assert!((tau - la).abs() < 1e-15);
    }

    #[test]
    fn feasible_anchor_is_absorbed_exactly() {
        let truth = cv(0.0, &[1.0, 0.0, -1.0]);
        let eval = random_logistic(300, &truth, 21);
        let anchor = cv(0.05, &[0.9, 0.1, -0.8]);
        let far = cv(0.0, &[-2.0, 2.0, 2.0]);
        let bank = ModelBank::new(vec![anchor.clone(), far], vec![10, 1]).unwrap();
        let tau = negative_log_likelihood(&anchor, &eval, LinkFunction::Logistic).unwrap() + 0.1;
        let hess = hessian(&anchor, &eval, LinkFunction::Logistic).unwrap();
        let set = UncertaintySet {
            bank: &bank,
            tau,
            eval_data: &eval,
            link: LinkFunction::Logistic,
        };
        let sol = adapt_estimate(&set, &anchor, &hess).unwrap();
        assert!(sol.diagnostics.anchor_absorbed);
        assert_eq!(sol.beta, anchor);
        assert_eq!(sol.weights.as_slice()[0], 1.0);
        assert_eq!(sol.diagnostics.objective, 0.0);
    }

    #[test]
    fn infinite_tau_with_zero_anchor_equals_maximin() {
        let truth = cv(0.0, &[0.5, -0.5]);
        let eval = random_logistic(200, &truth, 31);
        let bank = ModelBank::new(
            vec![cv(0.2, &[1.0, 0.3]), cv(-0.1, &[0.2, -0.8]), cv(0.0, &[-0.4, 0.6])],
            vec![1, 2, 3],
        )
        .unwrap();
        let hess = hessian(&CoefficientVector::zeros(2), &eval, LinkFunction::Logistic).unwrap();
        let set = UncertaintySet {
            bank: &bank,
            tau: f64::INFINITY,
            eval_data: &eval,
            link: LinkFunction::Logistic,
        };
        let zero = CoefficientVector::zeros(2);
        let sol = adapt_estimate(&set, &zero, &hess).unwrap();
        let (mm_beta, mm_w) = maximin_estimate(&bank, &hess).unwrap();
        assert!(sol.beta.max_abs_diff(&mm_beta) <= 1e-7);
        for (a, b) in sol.weights.as_slice().iter().zip(mm_w.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits(), "weights should be bitwise equal");
        }
    }

    #[test]
    fn maximin_single_source_returns_it() {
        let col = cv(0.1, &[1.0, 2.0]);
        let bank = ModelBank::new(vec![col.clone()], vec![1]).unwrap();
        let hess = Array2::eye(3);
        let (beta, w) = maximin_estimate(&bank, &hess).unwrap();
        assert!(beta.max_abs_diff(&col) < 1e-12);
        assert_eq!(w.as_slice(), &[1.0]);
    }

    #[test]
    fn maximin_orthogonal_columns_closed_form() {
        // Identity Hessian, orthogonal augmented columns: the optimal first
        // weight is ||b2||^2 / (||b1||^2 + ||b2||^2).
        let b1 = cv(0.0, &[2.0, 0.0]);
        let b2 = cv(0.0, &[0.0, 1.0]);
        let bank = ModelBank::new(vec![b1, b2], vec![1, 2]).unwrap();
        let hess = Array2::eye(3);
        let (_, w) = maximin_estimate(&bank, &hess).unwrap();
        let expect = 1.0 / (4.0 + 1.0);
        assert!((w.as_slice()[0] - expect).abs() < 1e-8, "{:?}", w);
    }

    #[test]
    fn maximin_zero_column_wins() {
        let bank = ModelBank::new(
            vec![cv(0.5, &[1.0]), cv(0.0, &[0.0]), cv(-0.3, &[2.0])],
            vec![1, 2, 3],
        )
        .unwrap();
        let hess = Array2::eye(2);
        let (beta, w) = maximin_estimate(&bank, &hess).unwrap();
        assert_eq!(beta, CoefficientVector::zeros(1));
        assert_eq!(w.as_slice()[1], 1.0);
    }

    #[test]
    fn best_source_combination_single_column() {
        let col = cv(0.0, &[0.7]);
        let bank = ModelBank::new(vec![col.clone()], vec![4]).unwrap();
        let data = random_logistic(50, &col, 3);
        let (w, beta) = best_source_combination(&bank, &data, LinkFunction::Logistic).unwrap();
        assert_eq!(w.as_slice(), &[1.0]);
        assert!(beta.max_abs_diff(&col) < 1e-12);
    }

    #[test]
    fn best_source_combination_matches_line_search() {
        let truth = cv(0.0, &[1.0, -1.0]);
        let data = random_logistic(500, &truth, 41);
        let b1 = cv(0.0, &[1.4, -0.2]);
        let b2 = cv(0.0, &[0.2, -1.6]);
        let bank = ModelBank::new(vec![b1.clone(), b2.clone()], vec![1, 2]).unwrap();
        let (w, _) = best_source_combination(&bank, &data, LinkFunction::Logistic).unwrap();
        let obj = |g: f64| {
            let mixed = cv(
                g * b1.intercept + (1.0 - g) * b2.intercept,
                &[
                    g * b1.slopes[0] + (1.0 - g) * b2.slopes[0],
                    g * b1.slopes[1] + (1.0 - g) * b2.slopes[1],
                ],
            );
            negative_log_likelihood(&mixed, &data, LinkFunction::Logistic).unwrap()
        };
        let mut best = f64::INFINITY;
        let mut arg = 0.0;
        for k in 0..=1000 {
            let g = k as f64 / 1000.0;
            let v = obj(g);
            if v < best {
                best = v;
                arg = g;
            }
        }
        let solver_obj = obj(w.as_slice()[0]);
        assert!(
            (solver_obj - best).abs() <= 1e-5,
            "solver {} vs grid {} at {}",
            solver_obj,
            best,
            arg
        );
    }

    #[test]
    fn best_source_combination_duplicate_columns_tie_rule() {
        let col = cv(0.0, &[0.9, 0.1]);
        let data = random_logistic(120, &col, 13);
        let bank = ModelBank::new(vec![col.clone(), col.clone()], vec![1, 2]).unwrap();
        let (w, beta) = best_source_combination(&bank, &data, LinkFunction::Logistic).unwrap();
        let single = negative_log_likelihood(&col, &data, LinkFunction::Logistic).unwrap();
        let got = negative_log_likelihood(&beta, &data, LinkFunction::Logistic).unwrap();
        assert!((got - single).abs() < 1e-10);
        assert!((w.as_slice()[0] - 0.5).abs() < 1e-9, "uniform tie rule");
    }

    #[test]
    fn uncertainty_set_membership() {
        let truth = cv(0.0, &[1.0]);
        let eval = random_logistic(200, &truth, 55);
        let good = cv(0.0, &[1.0]);
        let bad = cv(0.0, &[-3.0]);
        let bank = ModelBank::new(vec![good.clone(), bad], vec![1, 2]).unwrap();
        let tau = negative_log_likelihood(&good, &eval, LinkFunction::Logistic).unwrap() + 0.01;
        let set = UncertaintySet {
            bank: &bank,
            tau,
            eval_data: &eval,
            link: LinkFunction::Logistic,
        };
        assert!(set.contains(&SimplexWeights::unit(2, 0)).unwrap());
        assert!(!set.contains(&SimplexWeights::unit(2, 1)).unwrap());
    }

    #[test]
    fn empty_bank_rejected() {
        assert!(matches!(ModelBank::new(vec![], vec![]), Err(Error::EmptyBank)));
    }
}
