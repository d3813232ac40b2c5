//! Datasets: a design matrix with paired outcomes for one time period.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::glm::LinkFunction;

/// A design matrix with paired outcomes, optionally tagged with the calendar
/// period it was observed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    outcomes: Array1<f64>,
    period_label: Option<i64>,
}

impl Dataset {
    /// Builds a dataset, validating shape compatibility.
    pub fn new(features: Array2<f64>, outcomes: Array1<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::invalid_config("dataset must have n >= 1 and p >= 1"));
        }
        if outcomes.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                context: "outcome length vs feature rows",
                expected: features.nrows(),
                got: outcomes.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) || outcomes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "dataset" });
        }
        Ok(Dataset {
            features,
            outcomes,
            period_label: None,
        })
    }

    pub fn with_period(mut self, period: i64) -> Self {
        self.period_label = Some(period);
        self
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn outcomes(&self) -> &Array1<f64> {
        &self.outcomes
    }

    pub fn period_label(&self) -> Option<i64> {
        self.period_label
    }

    /// Checks the outcome vector against a link's codomain: logistic outcomes
    /// must be exactly 0 or 1.
    pub fn check_outcomes(&self, link: LinkFunction) -> Result<()> {
        if link == LinkFunction::Logistic {
            for (row, &y) in self.outcomes.iter().enumerate() {
                if y != 0.0 && y != 1.0 {
                    return Err(Error::NonBinaryOutcome { row, value: y });
                }
            }
        }
        Ok(())
    }

    /// Copies the rows at `indices` into a new dataset (period label kept).
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let p = self.p();
        let mut feat = Array2::zeros((indices.len(), p));
        let mut out = Array1::zeros(indices.len());
        for (k, &i) in indices.iter().enumerate() {
            feat.row_mut(k).assign(&self.features.row(i));
            out[k] = self.outcomes[i];
        }
        Dataset {
            features: feat,
            outcomes: out,
            period_label: self.period_label,
        }
    }

    /// Row-concatenates datasets. Periods are dropped unless all inputs agree.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or(Error::invalid_config("concat of zero datasets"))?;
        let p = first.p();
        for d in parts {
            if d.p() != p {
                return Err(Error::DimensionMismatch {
                    context: "feature dimension across concatenated datasets",
                    expected: p,
                    got: d.p(),
                });
            }
        }
        let n: usize = parts.iter().map(|d| d.n()).sum();
        let mut feat = Array2::zeros((n, p));
        let mut out = Array1::zeros(n);
        let mut at = 0;
        for d in parts {
            feat.slice_mut(ndarray::s![at..at + d.n(), ..]).assign(&d.features);
            out.slice_mut(ndarray::s![at..at + d.n()]).assign(&d.outcomes);
            at += d.n();
        }
        let label = {
            let l0 = parts[0].period_label;
            if parts.iter().all(|d| d.period_label == l0) {
                l0
            } else {
                None
            }
        };
        Ok(Dataset {
            features: feat,
            outcomes: out,
            period_label: label,
        })
    }
}
