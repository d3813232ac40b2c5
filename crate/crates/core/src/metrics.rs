//! Evaluation metrics: exact rank-based AUC, worst-case future AUC, and the
//! relative aging-effect statistic.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Area under the ROC curve as the rank statistic
/// P(score+ > score-) + 0.5 P(tie), computed exactly via average ranks.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "scores vs labels",
            expected: labels.len(),
            got: scores.len(),
        });
    }
    let mut n_pos = 0u64;
    let mut n_neg = 0u64;
    for (row, &l) in labels.iter().enumerate() {
        if l == 1.0 {
            n_pos += 1;
        } else if l == 0.0 {
            n_neg += 1;
        } else {
            return Err(Error::NonBinaryOutcome { row, value: l });
        }
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassLabels);
    }

    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Sum of average ranks (1-based) over the positives. Ranks are halves of
    // integers, so the arithmetic below is exact in f64.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1.0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let np = n_pos as f64;
    let nn = n_neg as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}

/// Mean AUC per (train period, eval period) cell, with the repetition count
/// that produced each mean.
#[derive(Debug, Clone, Default)]
pub struct AucTable {
    entries: BTreeMap<(i64, i64), f64>,
    pub reps: usize,
}

impl AucTable {
    pub fn new() -> Self {
        AucTable::default()
    }

    pub fn insert(&mut self, train_period: i64, eval_period: i64, mean_auc: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&mean_auc) {
            return Err(Error::invalid_config(format!(
                "AUC {mean_auc} outside [0, 1]"
            )));
        }
        self.entries.insert((train_period, eval_period), mean_auc);
        Ok(())
    }

    pub fn get(&self, train_period: i64, eval_period: i64) -> Option<f64> {
        self.entries.get(&(train_period, eval_period)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(i64, i64), &f64)> {
        self.entries.iter()
    }

    /// Aggregates raw (train, eval, auc) observations into per-cell means.
    pub fn from_observations(rows: impl IntoIterator<Item = (i64, i64, f64)>) -> Result<AucTable> {
        let mut sums: BTreeMap<(i64, i64), (f64, usize)> = BTreeMap::new();
        let mut max_count = 0;
        for (train, eval, value) in rows {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::invalid_config(format!("AUC {value} outside [0, 1]")));
            }
            let cell = sums.entry((train, eval)).or_insert((0.0, 0));
            cell.0 += value;
            cell.1 += 1;
            max_count = max_count.max(cell.1);
        }
        let mut table = AucTable::new();
        for ((train, eval), (sum, count)) in sums {
            table.insert(train, eval, sum / count as f64)?;
        }
        table.reps = max_count;
        Ok(table)
    }
}

/// Minimum AUC over evaluation periods strictly after the train period.
pub fn worst_future_auc(table: &AucTable, train_period: i64) -> Result<f64> {
    let mut worst: Option<f64> = None;
    for (&(train, eval), &value) in table.entries() {
        if train == train_period && eval > train_period {
            worst = Some(match worst {
                Some(w) => w.min(value),
                None => value,
            });
        }
    }
    worst.ok_or(Error::NoFutureEntries {
        train: train_period,
    })
}

/// What to do when a required table cell is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingCellPolicy {
    Fail,
    Skip,
}

/// Mean relative AUC loss of models trained `delta` periods earlier versus a
/// same-period model, over t = delta+1 ..= t_end:
///
/// `A(delta) = mean_t [ (AUC(t,t) - AUC(t-delta,t)) / (AUC(t,t) - 0.5) ]`
///
/// Each diagonal AUC must exceed 0.5 or the term is rejected by name.
pub fn aging_effect(table: &AucTable, delta: i64, t_end: i64) -> Result<f64> {
    aging_effect_with(table, delta, t_end, MissingCellPolicy::Fail)
}

pub fn aging_effect_with(
    table: &AucTable,
    delta: i64,
    t_end: i64,
    missing: MissingCellPolicy,
) -> Result<f64> {
    if delta < 1 || delta >= t_end {
        return Err(Error::invalid_config(format!(
            "delta must satisfy 1 <= delta < T (delta={delta}, T={t_end})"
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in (delta + 1)..=t_end {
        let newborn = table.get(t, t);
        let aged = table.get(t - delta, t);
        let (newborn, aged) = match (newborn, aged, missing) {
            (Some(a), Some(b), _) => (a, b),
            (None, _, MissingCellPolicy::Fail) => {
                return Err(Error::MissingAucEntry { train: t, eval: t })
            }
            (_, None, MissingCellPolicy::Fail) => {
                return Err(Error::MissingAucEntry {
                    train: t - delta,
                    eval: t,
                })
            }
            _ => continue,
        };
        let denom = newborn - 0.5;
        if denom <= 0.0 {
            return Err(Error::NonpositiveDenominator { t, auc: newborn });
        }
        sum += (newborn - aged) / denom;
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid_config(
            "no usable (train, eval) pairs for the aging effect",
        ));
    }
    Ok(sum / count as f64)
}
