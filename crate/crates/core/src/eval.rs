//! Threshold and ranking metrics plus confidence-bin analyses.
//!
//! Scores are the policy's probability of class 1. AUROC uses the
//! Mann-Whitney rank statistic with average ranks for ties; AUPRC uses the
//! step-wise average-precision summation with tied scores grouped into one
//! threshold. Confidence bins partition the probability of the PREDICTED
//! class, max(score, 1 − score), mapped from [0.5, 1] onto [0, 1].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::model::{ModelError, PolicyParams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metrics require a non-empty prediction sequence")]
    EmptyPredictions,
    #[error("AUROC needs both classes, got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("AUPRC needs at least one positive example")]
    NoPositives,
    #[error("confidence bins need at least 2 bins, got {0}")]
    BinCount(usize),
    #[error("score must lie in [0, 1], got {0}")]
    ScoreRange(f64),
    #[error("label must be 0 or 1, got {0}")]
    LabelRange(u8),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One scored example: the probability assigned to class 1, the reference
/// label, and optionally the advantage observed when the prediction was made
/// during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub score: f64,
    pub label: u8,
    pub advantage: Option<f64>,
}

impl ScoredPrediction {
    pub fn new(score: f64, label: u8, advantage: Option<f64>) -> Result<ScoredPrediction, EvalError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(EvalError::ScoreRange(score));
        }
        if label > 1 {
            return Err(EvalError::LabelRange(label));
        }
        Ok(ScoredPrediction { score, label, advantage })
    }
}

/// Per-bin statistics; empty bins keep `None` statistics rather than zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_advantage: Option<f64>,
}

/// Equal-width confidence bins; `edges` has `bins.len() + 1` entries over
/// [0, 1] in mapped confidence units t = 2·max(score, 1−score) − 1, while
/// `mean_confidence` stays in raw max-probability units within [0.5, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub edges: Vec<f64>,
    pub bins: Vec<BinStat>,
}

impl BinReport {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Fraction of predictions whose thresholded class matches the label; a
/// score exactly at the threshold predicts class 1.
pub fn accuracy(preds: &[ScoredPrediction], threshold: f64) -> Result<f64, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    let correct = preds
        .iter()
        .filter(|p| u8::from(p.score >= threshold) == p.label)
        .count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Probability a random positive outranks a random negative, ties credited
/// one half; Mann-Whitney ranks in O(n log n).
pub fn auroc(preds: &[ScoredPrediction]) -> Result<f64, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    let positives = preds.iter().filter(|p| p.label == 1).count();
    let negatives = preds.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass { positives, negatives });
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].score.total_cmp(&preds[b].score));
    // Average rank within each tied group (ranks are 1-based).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && preds[order[j]].score == preds[order[i]].score {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if preds[idx].label == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (positives * (positives + 1)) as f64 / 2.0;
    Ok(u / (positives as f64 * negatives as f64))
}

/// Average precision: step-wise summation Σ (R_k − R_{k−1})·P_k over
/// descending-score thresholds with tied scores grouped.
pub fn auprc(preds: &[ScoredPrediction]) -> Result<f64, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    let total_pos = preds.iter().filter(|p| p.label == 1).count();
    if total_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && preds[order[j]].score == preds[order[i]].score {
            if preds[order[j]].label == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// Equal-width bins over the mapped predicted-class confidence
/// t = 2·max(score, 1−score) − 1 ∈ [0, 1]; t = 1 falls in the last bin.
pub fn confidence_bins(preds: &[ScoredPrediction], n_bins: usize) -> Result<BinReport, EvalError> {
    if n_bins < 2 {
        return Err(EvalError::BinCount(n_bins));
    }
    let edges: Vec<f64> = (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect();
    let mut count = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    let mut correct = vec![0usize; n_bins];
    let mut adv_sum = vec![0.0; n_bins];
    let mut adv_count = vec![0usize; n_bins];
    for p in preds {
        debug_assert!((0.0..=1.0).contains(&p.score) && p.label <= 1);
        let confidence = p.score.max(1.0 - p.score);
        let t = 2.0 * confidence - 1.0;
        let bin = ((t * n_bins as f64) as usize).min(n_bins - 1);
        count[bin] += 1;
        conf_sum[bin] += confidence;
        let predicted = u8::from(p.score >= 0.5);
        if predicted == p.label {
            correct[bin] += 1;
        }
        if let Some(a) = p.advantage {
            adv_sum[bin] += a;
            adv_count[bin] += 1;
        }
    }
    let bins = (0..n_bins)
        .map(|b| BinStat {
            count: count[b],
            mean_confidence: (count[b] > 0).then(|| conf_sum[b] / count[b] as f64),
            accuracy: (count[b] > 0).then(|| correct[b] as f64 / count[b] as f64),
            mean_advantage: (adv_count[b] > 0).then(|| adv_sum[b] / adv_count[b] as f64),
        })
        .collect();
    Ok(BinReport { edges, bins })
}

/// Score every example of a dataset with the live policy against its stored
/// labels; advantages are absent because no reward is involved.
pub fn score_dataset(policy: &PolicyParams, dataset: &Dataset) -> Result<Vec<ScoredPrediction>, EvalError> {
    let mut preds = Vec::with_capacity(dataset.len());
    for e in dataset.examples() {
        let (_, p1, _) = policy.forward(&e.features)?;
        preds.push(ScoredPrediction { score: p1, label: e.label, advantage: None });
    }
    Ok(preds)
}
