//! Binary classification metrics: confusion counts, precision/recall/F1,
//! ROC curve and its area.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("ROC needs at least one positive and one negative (got {positives} positives, {negatives} negatives)")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("no scores to evaluate")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Tally `score >= threshold` against the truth.
pub fn confusion(scores: &[(f64, bool)], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for &(s, truth) in scores {
        match (s >= threshold, truth) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// A 0/0 ratio was replaced by 0.
    pub degenerate: bool,
}

/// Precision, recall and F1, with any 0/0 taken as 0.
pub fn prf1(c: &Confusion) -> Prf1 {
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let precision = p.unwrap_or(0.0);
    let recall = r.unwrap_or(0.0);
    Prf1 { precision, recall, f1: f1_score(precision, recall), degenerate: p.is_none() || r.is_none() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Posts scoring at or above this value are flagged. Infinite at the
    /// two endpoints.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// `threshold,fpr,tpr` rows; endpoints written as `inf` / `-inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let t = if p.threshold.is_infinite() {
                if p.threshold > 0.0 { "inf".to_string() } else { "-inf".to_string() }
            } else {
                p.threshold.to_string()
            };
            let _ = writeln!(out, "{t},{},{}", p.fpr, p.tpr);
        }
        out
    }
}

/// ROC over every distinct score, highest first, with equal scores
/// grouped into one step; AUC by the trapezoid rule. Tied groups thus
/// count half, matching the Mann–Whitney statistic.
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<RocCurve, MetricsError> {
    let positives = scores.iter().filter(|s| s.1).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateLabels { positives, negatives });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (pn, nn) = (positives as f64, negatives as f64);
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold: s, fpr: fp as f64 / nn, tpr: tp as f64 / pn });
    }
    points.push(RocPoint { threshold: f64::NEG_INFINITY, fpr: 1.0, tpr: 1.0 });
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Everything reported for one trained model on one labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub counts: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
    pub threshold: f64,
    pub auc: f64,
    /// `(fpr, tpr)` from the strictest threshold to the loosest.
    pub roc_points: Vec<(f64, f64)>,
}

/// Threshold-dependent and ranking metrics together. Requires both classes.
pub fn evaluate(scores: &[(f64, bool)], threshold: f64) -> Result<(EvalReport, RocCurve), MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let counts = confusion(scores, threshold);
    let m = prf1(&counts);
    let roc = roc_auc(scores)?;
    let report = EvalReport {
        counts,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        degenerate: m.degenerate,
        threshold,
        auc: roc.auc,
        roc_points: roc.points.iter().map(|p| (p.fpr, p.tpr)).collect(),
    };
    Ok((report, roc))
}
