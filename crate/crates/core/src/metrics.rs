//! Binary classification metrics over flat score/label vectors.
//!
//! The suite is the usual one for imbalanced per-node occurrence labels:
//! accuracy, balanced accuracy, F1, Matthews correlation, and a rank-based
//! AUC with average ranks for ties. Thresholded metrics classify a score as
//! positive when it is greater than or equal to the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Confusion counts at a fixed threshold.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    #[serde(rename = "tp")]
    pub true_positives: u64,
    #[serde(rename = "tn")]
    pub true_negatives: u64,
    #[serde(rename = "fp")]
    pub false_positives: u64,
    #[serde(rename = "fn")]
    pub false_negatives: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.true_positives + self.true_negatives + self.false_positives + self.false_negatives
    }
}

/// Count the four confusion cells. `scores[i] >= threshold` predicts
/// positive.
pub fn confusion(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if scores.is_empty() {
        return Err(Error::EmptyConfusion);
    }
    let mut c = Confusion {
        true_positives: 0,
        true_negatives: 0,
        false_positives: 0,
        false_negatives: 0,
    };
    for (&score, &label) in scores.iter().zip(labels) {
        match (score >= threshold, label) {
            (true, true) => c.true_positives += 1,
            (true, false) => c.false_positives += 1,
            (false, true) => c.false_negatives += 1,
            (false, false) => c.true_negatives += 1,
        }
    }
    Ok(c)
}

/// Area under the ROC curve via the Mann-Whitney rank statistic with
/// average ranks for tied scores:
///
/// `AUC = (sum of positive ranks - n_pos (n_pos + 1) / 2) / (n_pos n_neg)`
///
/// Errors when labels contain a single class.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassLabels);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Average-rank assignment over runs of equal scores (1-based ranks).
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos = n_pos as f64;
    let n_neg = n_neg as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Metrics derived from a confusion matrix. Any metric whose denominator is
/// zero is reported as 0 so reports stay total.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedMetrics {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub f1: f64,
    pub mcc: f64,
}

pub fn derived_metrics(c: &Confusion) -> Result<DerivedMetrics> {
    if c.total() == 0 {
        return Err(Error::EmptyConfusion);
    }
    let tp = c.true_positives as f64;
    let tn = c.true_negatives as f64;
    let fp = c.false_positives as f64;
    let fn_ = c.false_negatives as f64;

    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let accuracy = (tp + tn) / c.total() as f64;
    let balanced_accuracy = (ratio(tp, tp + fn_) + ratio(tn, tn + fp)) / 2.0;
    let f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn_);
    let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio(tp * tn - fp * fn_, mcc_den);
    Ok(DerivedMetrics { accuracy, balanced_accuracy, f1, mcc })
}

/// The full metric suite for one model run.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub auc: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub f1: f64,
    pub mcc: f64,
    pub confusion: Confusion,
}

pub fn evaluation_report(scores: &[f64], labels: &[bool], threshold: f64) -> Result<EvaluationReport> {
    let c = confusion(scores, labels, threshold)?;
    let derived = derived_metrics(&c)?;
    Ok(EvaluationReport {
        auc: auc(scores, labels)?,
        accuracy: derived.accuracy,
        balanced_accuracy: derived.balanced_accuracy,
        f1: derived.f1,
        mcc: derived.mcc,
        confusion: c,
    })
}
