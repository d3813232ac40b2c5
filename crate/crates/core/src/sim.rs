//! Synthetic temporal-drift benchmark generator.
//!
//! Coefficients evolve over discrete periods by an autoregressive mixture of
//! the previous `m` vectors, with per-coordinate Bernoulli shocks redrawn
//! from a normal, and a one-time global perturbation blended in at a chosen
//! period. Covariates are standard normal; outcomes are Bernoulli through
//! the logistic link.
//!
//! Every random draw comes from a sub-stream derived from `(seed, domain,
//! period)`, so changing one knob (for example the perturbation level)
//! leaves all other draws untouched.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{sigmoid, CoefficientVector};
use crate::rng::{derive_seed, domain, stream};

fn default_l() -> usize {
    15
}
fn default_p() -> usize {
    100
}
fn default_p0() -> usize {
    30
}
fn default_m() -> usize {
    3
}
fn default_ar_weights() -> Vec<f64> {
    vec![1.0 / 3.0; 3]
}
fn default_p_shock() -> f64 {
    0.2
}
fn default_sigma_shock() -> f64 {
    1.0
}
fn default_perturb_time() -> usize {
    8
}
fn default_n() -> usize {
    2000
}
fn default_rho() -> f64 {
    0.2
}

/// All parameters of the drift generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftConfig {
    /// Number of periods L.
    pub periods: usize,
    /// Coefficient dimension p.
    pub p: usize,
    /// Coordinates zeroed in each seed vector.
    pub p0: usize,
    /// Autoregressive order m.
    pub m: usize,
    /// Mixing weights over the previous m coefficient vectors, in
    /// chronological order (first weight applies to the oldest lag).
    pub ar_weights: Vec<f64>,
    /// Per-coordinate shock probability.
    pub p_shock: f64,
    /// Shock standard deviation.
    pub sigma_shock: f64,
    /// Global perturbation level in [0, 1).
    pub p_perturb: f64,
    /// Period at which the global perturbation is blended in.
    pub perturb_time: usize,
    /// Per-period historical sample size N.
    pub n_per_period: usize,
    /// Current-to-historical size ratio: the current period has round(rho*N)
    /// training samples.
    pub rho: f64,
    pub seed: u64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            periods: default_l(),
            p: default_p(),
            p0: default_p0(),
            m: default_m(),
            ar_weights: default_ar_weights(),
            p_shock: default_p_shock(),
            sigma_shock: default_sigma_shock(),
            p_perturb: 0.0,
            perturb_time: default_perturb_time(),
            n_per_period: default_n(),
            rho: default_rho(),
            seed: 0,
        }
    }
}

impl DriftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid_config("p must be >= 1"));
        }
        if self.p0 > self.p {
            return Err(Error::invalid_config("p0 must satisfy 0 <= p0 <= p"));
        }
        if self.m == 0 || self.m >= self.periods {
            return Err(Error::invalid_config("m must satisfy 1 <= m < L"));
        }
        if self.ar_weights.len() != self.m {
            return Err(Error::invalid_config("ar_weights must have length m"));
        }
        if self.ar_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid_config("ar_weights must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_shock) {
            return Err(Error::invalid_config("p_shock must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.p_perturb) {
            return Err(Error::invalid_config("p_perturb must lie in [0, 1)"));
        }
        if self.perturb_time < 1 || self.perturb_time > self.periods {
            return Err(Error::invalid_config("perturb_time must lie in 1..=L"));
        }
        if !(self.sigma_shock >= 0.0) {
            return Err(Error::invalid_config("sigma_shock must be >= 0"));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::invalid_config("rho must lie in (0, 1]"));
        }
        if self.n_per_period == 0 {
            return Err(Error::invalid_config("n_per_period must be >= 1"));
        }
        Ok(())
    }

    /// Current-period training size round(rho * N), at least 1.
    pub fn current_n(&self) -> usize {
        ((self.rho * self.n_per_period as f64).round() as usize).max(1)
    }
}

/// The time-indexed true coefficients (intercepts fixed at zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPath {
    pub betas: Vec<CoefficientVector>,
}

impl CoefficientPath {
    /// 1-based period accessor matching the generator's time index.
    pub fn at(&self, period: usize) -> &CoefficientVector {
        &self.betas[period - 1]
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

/// Generates the coefficient path: `m` sparse seed vectors, then for each
/// later period an AR mixture of the previous `m` vectors with Bernoulli
/// shock replacement, and at `perturb_time` a convex blend with a fresh
/// N(0, 0.5 I) draw weighted by `p_perturb`.
pub fn generate_coefficient_path(config: &DriftConfig) -> Result<CoefficientPath> {
    config.validate()?;
    let p = config.p;
    let mut betas: Vec<Array1<f64>> = Vec::with_capacity(config.periods);

    for t in 1..=config.m {
        let mut rng = stream(config.seed, &[domain::PATH_SEED, t as u64]);
        let mut v = Array1::zeros(p);
        for j in 0..p {
            v[j] = rng.sample::<f64, _>(StandardNormal);
        }
        let zeroed = rand::seq::index::sample(&mut rng, p, config.p0);
        for j in zeroed.iter() {
            v[j] = 0.0;
        }
        betas.push(v);
    }

    let sd_perturb = 0.5f64.sqrt(); // N(0, 0.5 I): variance one half per coordinate
    for l in (config.m + 1)..=config.periods {
        let mut mask_rng = stream(config.seed, &[domain::PATH_SHOCK_MASK, l as u64]);
        let mut shock_rng = stream(config.seed, &[domain::PATH_SHOCK_VALUE, l as u64]);
        let mut next = Array1::zeros(p);
        for j in 0..p {
            let mut base = 0.0;
            for (i, &w) in config.ar_weights.iter().enumerate() {
                // weight i applies to period l - m + i
                base += w * betas[l - config.m + i - 1][j];
            }
            let shocked = mask_rng.gen::<f64>() < config.p_shock;
            let shock_value: f64 = shock_rng.sample::<f64, _>(StandardNormal);
            next[j] = if shocked {
                config.sigma_shock * shock_value
            } else {
                base
            };
        }
        if l == config.perturb_time {
            let mut perturb_rng = stream(config.seed, &[domain::PATH_PERTURB, l as u64]);
            for j in 0..p {
                let u: f64 = perturb_rng.sample::<f64, _>(StandardNormal);
                next[j] = (1.0 - config.p_perturb) * next[j] + config.p_perturb * sd_perturb * u;
            }
        }
        betas.push(next);
    }

    let betas = betas
        .into_iter()
        .map(|slopes| CoefficientVector::new(0.0, slopes))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoefficientPath { betas })
}

/// Draws `n` rows of standard-normal covariates and Bernoulli outcomes
/// through the logistic link at the given coefficients.
pub fn generate_dataset(beta: &CoefficientVector, n: usize, rng_seed: u64) -> Dataset {
    let p = beta.dim();
    let mut x_rng = stream(rng_seed, &[domain::DATA_X]);
    let mut y_rng = stream(rng_seed, &[domain::DATA_Y]);
    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            x[[i, j]] = x_rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let eta: f64 = beta.intercept + x.row(i).dot(&beta.slopes);
        y[i] = if y_rng.gen::<f64>() < sigmoid(eta) {
            1.0
        } else {
            0.0
        };
    }
    Dataset::new(x, y).expect("generated data is finite and well shaped")
}

/// One benchmark scenario: historical training sets before the current
/// period, the (smaller) current training set, and fresh evaluation sets for
/// the current and every future period.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub historical: Vec<Dataset>,
    pub current_train: Dataset,
    /// Evaluation sets for periods current..=L, in period order.
    pub evaluation: Vec<Dataset>,
    pub current_period: usize,
    pub path: CoefficientPath,
}

/// Generates a full scenario at the designated current period.
pub fn generate_scenario(
    config: &DriftConfig,
    current_period: usize,
    eval_sample_size: usize,
) -> Result<Scenario> {
    config.validate()?;
    if current_period < 1 || current_period > config.periods {
        return Err(Error::invalid_config(format!(
            "current period {current_period} out of range 1..={}",
            config.periods
        )));
    }
    if eval_sample_size == 0 {
        return Err(Error::invalid_config("evaluation sample size must be >= 1"));
    }
    let path = generate_coefficient_path(config)?;

    let mut historical = Vec::with_capacity(current_period.saturating_sub(1));
    for l in 1..current_period {
        let seed = derive_seed(config.seed, &[domain::SCENARIO_HIST, l as u64]);
        historical.push(generate_dataset(path.at(l), config.n_per_period, seed).with_period(l as i64));
    }

    let current_seed = derive_seed(config.seed, &[domain::SCENARIO_CURRENT, current_period as u64]);
    let current_train = generate_dataset(path.at(current_period), config.current_n(), current_seed)
        .with_period(current_period as i64);

    let mut evaluation = Vec::with_capacity(config.periods - current_period + 1);
    for l in current_period..=config.periods {
        let seed = derive_seed(config.seed, &[domain::SCENARIO_EVAL, l as u64]);
        evaluation.push(generate_dataset(path.at(l), eval_sample_size, seed).with_period(l as i64));
    }

    Ok(Scenario {
        historical,
        current_train,
        evaluation,
        current_period,
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        DriftConfig::default().validate().unwrap();
    }

    #[test]
    fn seed_vectors_have_exactly_p0_zeros() {
        let config = DriftConfig {
            seed: 3,
            ..DriftConfig::default()
        };
        let path = generate_coefficient_path(&config).unwrap();
        for t in 1..=config.m {
            let zeros = path.at(t).slopes.iter().filter(|&&v| v == 0.0).count();
            assert_eq!(zeros, config.p0, "seed vector {t}");
        }
    }

    #[test]
    fn zero_perturbation_matches_standard_branch() {
        let base = DriftConfig {
            seed: 11,
            p_perturb: 0.0,
            ..DriftConfig::default()
        };
        let perturbed = DriftConfig {
            p_perturb: 0.6,
            ..base.clone()
        };
        let a = generate_coefficient_path(&base).unwrap();
        let b = generate_coefficient_path(&perturbed).unwrap();
        // Identical RNG streams: every period except the perturbed one (and
        // its descendants) coincides exactly.
        for l in 1..base.perturb_time {
            assert_eq!(a.at(l), b.at(l), "period {l} before the perturbation");
        }
        assert_ne!(a.at(base.perturb_time), b.at(base.perturb_time));
    }

    #[test]
    fn degenerate_dynamics_keep_path_constant() {
        let config = DriftConfig {
            periods: 6,
            p: 10,
            p0: 3,
            m: 1,
            ar_weights: vec![1.0],
            p_shock: 0.0,
            p_perturb: 0.0,
            perturb_time: 4,
            seed: 2,
            ..DriftConfig::default()
        };
        let path = generate_coefficient_path(&config).unwrap();
        for l in 2..=6 {
            assert_eq!(path.at(l), path.at(1), "period {l}");
        }
    }

    #[test]
    fn perturbation_distance_is_monotone_in_level() {
        // Same seed per draw: the displacement at the perturbed period grows
        // with the level.
        let levels = [0.0, 0.3, 0.6, 0.9];
        for seed in 0..10 {
            let mut dists = Vec::new();
            let reference = generate_coefficient_path(&DriftConfig {
                seed,
                p_perturb: 0.0,
                ..DriftConfig::default()
            })
            .unwrap();
            for &pp in &levels {
                let path = generate_coefficient_path(&DriftConfig {
                    seed,
                    p_perturb: pp,
                    ..DriftConfig::default()
                })
                .unwrap();
                let d: f64 = path
                    .at(8)
                    .slopes
                    .iter()
                    .zip(reference.at(8).slopes.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                dists.push(d);
            }
            for w in dists.windows(2) {
                assert!(w[0] <= w[1] + 1e-12, "distances not monotone: {dists:?}");
            }
        }
    }

    #[test]
    fn shock_rate_matches_probability() {
        let config = DriftConfig {
            seed: 17,
            ..DriftConfig::default()
        };
        let path = generate_coefficient_path(&config).unwrap();
        // A coordinate is shocked when it departs from the AR mixture. Count
        // departures at non-perturbed periods.
        let mut shocked = 0usize;
        let mut total = 0usize;
        for l in (config.m + 1)..=config.periods {
            if l == config.perturb_time {
                continue;
            }
            for j in 0..config.p {
                let mut base = 0.0;
                for (i, &w) in config.ar_weights.iter().enumerate() {
                    base += w * path.at(l - config.m + i).slopes[j];
                }
                if (path.at(l).slopes[j] - base).abs() > 1e-12 {
                    shocked += 1;
                }
                total += 1;
            }
        }
        let rate = shocked as f64 / total as f64;
        assert!(
            (rate - config.p_shock).abs() <= 0.03,
            "empirical shock rate {rate}"
        );
    }

    #[test]
    fn generated_outcomes_balanced_at_zero_beta() {
        let beta = CoefficientVector::zeros(4);
        let n = 4000;
        let d = generate_dataset(&beta, n, 5);
        let mean = d.outcomes().sum() / n as f64;
        let bound = 3.0 * (0.25 / n as f64).sqrt();
        assert!((mean - 0.5).abs() <= bound, "mean {mean}");
    }

    #[test]
    fn covariates_standard_normal_moments() {
        let beta = CoefficientVector::zeros(3);
        let n = 4000;
        let d = generate_dataset(&beta, n, 8);
        for j in 0..3 {
            let col = d.features().column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "column {j} mean {mean}");
            assert!((var - 1.0).abs() <= 5.0 / (n as f64).sqrt(), "column {j} var {var}");
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let beta = CoefficientVector::new(0.0, Array1::from_vec(vec![0.5, -0.5])).unwrap();
        let a = generate_dataset(&beta, 50, 123);
        let b = generate_dataset(&beta, 50, 123);
        assert_eq!(a, b);
    }

    #[test]
    fn scenario_sizes_and_labels() {
        let config = DriftConfig {
            periods: 6,
            p: 5,
            p0: 2,
            perturb_time: 4,
            n_per_period: 100,
            rho: 0.2,
            seed: 7,
            ..DriftConfig::default()
        };
        let s = generate_scenario(&config, 4, 64).unwrap();
        assert_eq!(s.historical.len(), 3);
        assert_eq!(s.current_train.n(), 20);
        assert_eq!(s.evaluation.len(), 3);
        for (i, h) in s.historical.iter().enumerate() {
            assert_eq!(h.period_label(), Some(i as i64 + 1));
            assert_eq!(h.n(), 100);
        }
        assert_eq!(s.current_train.period_label(), Some(4));
        for (i, e) in s.evaluation.iter().enumerate() {
            assert_eq!(e.period_label(), Some(4 + i as i64));
            assert_eq!(e.n(), 64);
        }
    }

    #[test]
    fn rho_one_recovers_full_size() {
        let config = DriftConfig {
            rho: 1.0,
            ..DriftConfig::default()
        };
        assert_eq!(config.current_n(), config.n_per_period);
        let config = DriftConfig {
            rho: 0.2,
            n_per_period: 2000,
            ..DriftConfig::default()
        };
        assert_eq!(config.current_n(), 400);
    }

    #[test]
    fn scenario_is_pure_function_of_config() {
        let config = DriftConfig {
            periods: 5,
            p: 4,
            p0: 1,
            perturb_time: 3,
            n_per_period: 60,
            seed: 99,
            ..DriftConfig::default()
        };
        let a = generate_scenario(&config, 3, 32).unwrap();
        let b = generate_scenario(&config, 3, 32).unwrap();
        assert_eq!(a.current_train, b.current_train);
        assert_eq!(a.historical, b.historical);
        assert_eq!(a.evaluation, b.evaluation);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = DriftConfig::default();
        c.p0 = c.p + 1;
        assert!(c.validate().is_err());
        let mut c = DriftConfig::default();
        c.p_perturb = 1.0;
        assert!(c.validate().is_err());
        let mut c = DriftConfig::default();
        c.perturb_time = 0;
        assert!(c.validate().is_err());
        let mut c = DriftConfig::default();
        c.ar_weights = vec![1.0];
        assert!(c.validate().is_err());
    }
}
