//! Generalized linear model primitives: links, coefficient vectors, and the
//! mean negative log-likelihood with its first two derivatives.
//!
//! All losses are per-sample means, not sums, so that values computed on
//! data splits of different sizes are directly comparable.

use ndarray::{Array1, Array2};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Link function of the GLM. Logistic pairs with Bernoulli outcomes,
/// identity with squared error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    Logistic,
    Identity,
}

impl LinkFunction {
    /// Inverse link: maps a linear predictor to the conditional mean.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logistic => sigmoid(eta),
            LinkFunction::Identity => eta,
        }
    }
}

impl std::str::FromStr for LinkFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(LinkFunction::Logistic),
            "identity" => Ok(LinkFunction::Identity),
            other => Err(Error::invalid_config(format!("unknown link: {other}"))),
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Stable ln(1 + exp(eta)).
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// An intercept plus `p` slope coefficients.
///
/// The intercept is always present and is never penalized by the fitting
/// routines. All coefficient vectors participating in one analysis must
/// share the same slope dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub intercept: f64,
    pub slopes: Array1<f64>,
}

impl CoefficientVector {
    pub fn new(intercept: f64, slopes: Array1<f64>) -> Result<Self> {
        if !intercept.is_finite() || slopes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "coefficient vector",
            });
        }
        Ok(CoefficientVector { intercept, slopes })
    }

    pub fn zeros(p: usize) -> Self {
        CoefficientVector {
            intercept: 0.0,
            slopes: Array1::zeros(p),
        }
    }

    pub fn dim(&self) -> usize {
        self.slopes.len()
    }

    /// Flattens to an intercept-augmented vector of length p+1
    /// (intercept first).
    pub fn to_augmented(&self) -> Array1<f64> {
        let mut v = Array1::zeros(self.dim() + 1);
        v[0] = self.intercept;
        v.slice_mut(ndarray::s![1..]).assign(&self.slopes);
        v
    }

    pub fn from_augmented(aug: &Array1<f64>) -> Self {
        CoefficientVector {
            intercept: aug[0],
            slopes: aug.slice(ndarray::s![1..]).to_owned(),
        }
    }

    /// Maximum absolute coefficient difference, intercept included.
    pub fn max_abs_diff(&self, other: &CoefficientVector) -> f64 {
        let mut m = (self.intercept - other.intercept).abs();
        for (a, b) in self.slopes.iter().zip(other.slopes.iter()) {
            m = m.max((a - b).abs());
        }
        m
    }
}

#[derive(Serialize, Deserialize)]
struct CoefficientVectorRepr {
    intercept: f64,
    slopes: Vec<f64>,
}

impl Serialize for CoefficientVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CoefficientVectorRepr {
            intercept: self.intercept,
            slopes: self.slopes.to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CoefficientVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = CoefficientVectorRepr::deserialize(deserializer)?;
        CoefficientVector::new(repr.intercept, Array1::from_vec(repr.slopes))
            .map_err(|e| D::Error::custom(e.to_string()))
    }
}

fn check_dims(beta: &CoefficientVector, data: &Dataset) -> Result<()> {
    if beta.dim() != data.p() {
        return Err(Error::DimensionMismatch {
            context: "coefficient dimension vs feature columns",
            expected: data.p(),
            got: beta.dim(),
        });
    }
    Ok(())
}

/// Linear predictors eta_i = intercept + x_i' slopes.
pub fn linear_predictor(beta: &CoefficientVector, data: &Dataset) -> Array1<f64> {
    let mut eta = data.features().dot(&beta.slopes);
    eta += beta.intercept;
    eta
}

/// Mean per-sample negative log-likelihood.
///
/// Logistic: mean of ln(1+exp(eta)) - y*eta. Identity: half mean squared
/// error. Both are convex in the coefficients.
pub fn negative_log_likelihood(
    beta: &CoefficientVector,
    data: &Dataset,
    link: LinkFunction,
) -> Result<f64> {
    check_dims(beta, data)?;
    data.check_outcomes(link)?;
    let eta = linear_predictor(beta, data);
    Ok(nll_from_eta(&eta, data.outcomes(), link))
}

/// Loss evaluated from precomputed linear predictors (callers guarantee the
/// outcome/link contract).
pub(crate) fn nll_from_eta(eta: &Array1<f64>, y: &Array1<f64>, link: LinkFunction) -> f64 {
    let n = y.len() as f64;
    match link {
        LinkFunction::Logistic => {
            let mut acc = 0.0;
            for (&e, &yi) in eta.iter().zip(y.iter()) {
                acc += log1p_exp(e) - yi * e;
            }
            acc / n
        }
        LinkFunction::Identity => {
            let mut acc = 0.0;
            for (&e, &yi) in eta.iter().zip(y.iter()) {
                let r = yi - e;
                acc += 0.5 * r * r;
            }
            acc / n
        }
    }
}

/// Gradient of the mean NLL with respect to (intercept, slopes).
pub fn gradient(
    beta: &CoefficientVector,
    data: &Dataset,
    link: LinkFunction,
) -> Result<Array1<f64>> {
    check_dims(beta, data)?;
    data.check_outcomes(link)?;
    let n = data.n() as f64;
    let eta = linear_predictor(beta, data);
    // residual r_i = mu_i - y_i for both links
    let mut r = Array1::zeros(data.n());
    for (i, (&e, &yi)) in eta.iter().zip(data.outcomes().iter()).enumerate() {
        r[i] = link.mean(e) - yi;
    }
    let mut g = Array1::zeros(data.p() + 1);
    g[0] = r.sum() / n;
    let slope_grad = data.features().t().dot(&r) / n;
    g.slice_mut(ndarray::s![1..]).assign(&slope_grad);
    Ok(g)
}

/// Hessian of the mean NLL: (1/n) X~' W X~ with X~ the intercept-augmented
/// design and W the link's variance weights (logistic: mu(1-mu); identity: 1).
/// Symmetric positive semidefinite by construction.
pub fn hessian(
    beta: &CoefficientVector,
    data: &Dataset,
    link: LinkFunction,
) -> Result<Array2<f64>> {
    check_dims(beta, data)?;
    data.check_outcomes(link)?;
    let n = data.n();
    let p = data.p();
    let weights: Array1<f64> = match link {
        LinkFunction::Logistic => {
            let eta = linear_predictor(beta, data);
            eta.mapv(|e| {
                let m = sigmoid(e);
                m * (1.0 - m)
            })
        }
        LinkFunction::Identity => Array1::ones(n),
    };
    let x = data.features();
    let mut h = Array2::zeros((p + 1, p + 1));
    let wsum = weights.sum();
    h[[0, 0]] = wsum;
    for j in 0..p {
        let col = x.column(j);
        let wx: f64 = col.iter().zip(weights.iter()).map(|(&v, &w)| w * v).sum();
        h[[0, j + 1]] = wx;
        h[[j + 1, 0]] = wx;
    }
    // Weighted Gram of the feature block, filled symmetrically.
    for j in 0..p {
        for k in j..p {
            let mut acc = 0.0;
            for i in 0..n {
                acc += weights[i] * x[[i, j]] * x[[i, k]];
            }
            h[[j + 1, k + 1]] = acc;
            h[[k + 1, j + 1]] = acc;
        }
    }
    h.mapv_inplace(|v| v / n as f64);
    Ok(h)
}

/// Per-sample predictions g^{-1}(eta_i).
pub fn predict_scores(
    beta: &CoefficientVector,
    data: &Dataset,
    link: LinkFunction,
) -> Result<Array1<f64>> {
    check_dims(beta, data)?;
    let eta = linear_predictor(beta, data);
    Ok(eta.mapv(|e| link.mean(e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Dataset {
        Dataset::new(array![[1.0, 2.0], [0.5, -1.0], [-2.0, 0.3]], array![1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_beta_logistic_is_ln2() {
        let d = toy();
        let b = CoefficientVector::zeros(2);
        let v = negative_log_likelihood(&b, &d, LinkFunction::Logistic).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_sample_logistic_value() {
        let d = Dataset::new(array![[1.0, 2.0]], array![1.0]).unwrap();
        let b = CoefficientVector::new(0.0, array![1.0, 0.0]).unwrap();
        let v = negative_log_likelihood(&b, &d, LinkFunction::Logistic).unwrap();
        assert!((v - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        assert!((v - 0.3132617).abs() < 1e-7);
    }

    #[test]
    fn identity_is_half_mse() {
        let d = Dataset::new(array![[1.0]], array![2.0]).unwrap();
        let b = CoefficientVector::new(0.0, array![1.0]).unwrap();
        let v = negative_log_likelihood(&b, &d, LinkFunction::Identity).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradient_single_sample_at_zero() {
        let d = Dataset::new(array![[1.0]], array![1.0]).unwrap();
        let b = CoefficientVector::zeros(1);
        let g = gradient(&b, &d, LinkFunction::Logistic).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15);
        assert!((g[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradient_mirrored_rows_cancel_by_symmetry() {
        // Mirrored covariates with a shared label cancel in the slope
        // gradient at beta = 0; an opposite-label mirrored pair cancels in
        // the intercept gradient instead.
        let d = Dataset::new(array![[1.5, -0.7], [-1.5, 0.7]], array![1.0, 1.0]).unwrap();
        let b = CoefficientVector::zeros(2);
        let g = gradient(&b, &d, LinkFunction::Logistic).unwrap();
        assert!(g[1].abs() < 1e-15);
        assert!(g[2].abs() < 1e-15);

        let d2 = Dataset::new(array![[1.5, -0.7], [-1.5, 0.7]], array![1.0, 0.0]).unwrap();
        let g2 = gradient(&b, &d2, LinkFunction::Logistic).unwrap();
        assert!(g2[0].abs() < 1e-15);
    }

    #[test]
    fn hessian_single_sample_at_zero() {
        let d = Dataset::new(array![[2.0]], array![1.0]).unwrap();
        let b = CoefficientVector::zeros(1);
        let h = hessian(&b, &d, LinkFunction::Logistic).unwrap();
        assert!((h[[0, 0]] - 0.25).abs() < 1e-15);
        assert!((h[[0, 1]] - 0.5).abs() < 1e-15);
        assert!((h[[1, 0]] - 0.5).abs() < 1e-15);
        assert!((h[[1, 1]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn predict_scores_at_zero_is_half() {
        let d = toy();
        let b = CoefficientVector::zeros(2);
        let s = predict_scores(&b, &d, LinkFunction::Logistic).unwrap();
        assert!(s.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn scores_monotone_and_finite() {
        assert!(sigmoid(1.2) > sigmoid(0.3));
        assert!(sigmoid(-40.0) > 0.0);
        // Saturates to exactly 1.0 in f64 but never overflows.
        assert!(sigmoid(40.0).is_finite() && sigmoid(40.0) <= 1.0);
        assert!(sigmoid(800.0).is_finite() && sigmoid(-800.0).is_finite());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let d = toy();
        let b = CoefficientVector::zeros(3);
        assert!(negative_log_likelihood(&b, &d, LinkFunction::Logistic).is_err());
    }

    #[test]
    fn coefficient_vector_json_round_trip() {
        let b = CoefficientVector::new(0.25, array![1.0, -2.5]).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"intercept":0.25,"slopes":[1.0,-2.5]}"#);
        let back: CoefficientVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn rejects_nan_coefficients() {
        assert!(CoefficientVector::new(f64::NAN, array![0.0]).is_err());
    }
}
