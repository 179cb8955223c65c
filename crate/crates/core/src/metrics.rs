//! Binary detection metrics.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{scores} scores but {labels} labels")]
    Length { scores: usize, labels: usize },
    #[error("no examples")]
    Empty,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// `+inf` for the origin point; written as `null` in JSON.
    #[serde(deserialize_with = "threshold_or_inf")]
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// 0 when nothing is predicted positive.
    pub precision: f64,
    /// 0 when there are no positives.
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub roc: Vec<RocPoint>,
}

fn threshold_or_inf<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// ROC curve with one point per distinct score (descending), starting at
/// (0, 0). Empty when only one class is present.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Vec<RocPoint> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = alloc::vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push(RocPoint { threshold: s, fpr: ratio(fp, neg), tpr: ratio(tp, pos) });
    }
    pts
}

/// Trapezoidal area under `roc`.
pub fn auc(roc: &[RocPoint]) -> Option<f64> {
    if roc.len() < 2 {
        return None;
    }
    Some(roc.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum())
}

/// Metrics for predicting positive when `score >= threshold`.
pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Metrics, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::Length { scores: scores.len(), labels: labels.len() });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let roc = roc_curve(scores, labels);
    Ok(Metrics {
        threshold,
        tp,
        fp,
        tn,
        fn_,
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, scores.len()),
        auc: auc(&roc),
        roc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roc_json_round_trip() {
        let m = evaluate(&[0.9, 0.1], &[true, false], 0.5).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: Metrics = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.roc[0].threshold, f64::INFINITY);
    }

    #[test]
    fn perfect_split() {
        let m = evaluate(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false], 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (2, 0, 2, 0));
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert_eq!(m.auc, Some(1.0));
    }

    #[test]
    fn ties_count_half() {
        let m = evaluate(&[0.5, 0.5], &[true, false], 0.5).unwrap();
        assert_eq!(m.auc, Some(0.5));
    }

    #[test]
    fn single_class_has_no_auc() {
        let m = evaluate(&[0.1, 0.7], &[true, true], 0.5).unwrap();
        assert_eq!(m.auc, None);
        assert!(m.roc.is_empty());
        assert_eq!(m.recall, 0.5);
    }

    #[test]
    fn errors() {
        assert_eq!(evaluate(&[], &[], 0.5), Err(MetricsError::Empty));
        assert!(matches!(evaluate(&[0.1], &[], 0.5), Err(MetricsError::Length { .. })));
        assert_eq!(evaluate(&[f64::NAN], &[true], 0.5), Err(MetricsError::NonFinite(0)));
    }
}
