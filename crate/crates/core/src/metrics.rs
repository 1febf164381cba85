//! Precision / recall / F1 over probability outputs.
//!
//! The manipulated class is the positive one: a sample counts as predicted
//! positive when its probability reaches the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub threshold: f64,
}

pub fn compute_metrics(probs: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::contract(format!(
            "compute_metrics: {} probabilities vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in probs.iter().zip(labels) {
        let pred = p >= threshold;
        match (pred, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        precision,
        recall,
        f1,
        tp,
        fp,
        tn,
        fn_,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = compute_metrics(&[0.9, 0.1, 0.8, 0.2], &[1, 0, 1, 0], 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (2, 0, 2, 0));
    }

    #[test]
    fn all_positive_predictor_on_balanced_set() {
        let m = compute_metrics(&[0.9, 0.9, 0.9, 0.9], &[1, 1, 0, 0], 0.5).unwrap();
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 1.0);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hand_confusion_matrix() {
        let m = compute_metrics(&[0.9, 0.4, 0.6, 0.1], &[1, 1, 0, 0], 0.5).unwrap();
        assert_eq!((m.tp, m.fn_, m.fp, m.tn), (1, 1, 1, 1));
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn counts_partition_the_set() {
        let probs: Vec<f64> = (0..37).map(|i| i as f64 / 37.0).collect();
        let labels: Vec<u8> = (0..37).map(|i| (i % 3 == 0) as u8).collect();
        let m = compute_metrics(&probs, &labels, 0.5).unwrap();
        assert_eq!(m.tp + m.fp + m.tn + m.fn_, 37);
    }

    #[test]
    fn permutation_invariant() {
        let probs = [0.9, 0.4, 0.6, 0.1, 0.7];
        let labels = [1u8, 1, 0, 0, 1];
        let a = compute_metrics(&probs, &labels, 0.5).unwrap();
        let perm = [4usize, 2, 0, 3, 1];
        let p2: Vec<f64> = perm.iter().map(|&i| probs[i]).collect();
        let l2: Vec<u8> = perm.iter().map(|&i| labels[i]).collect();
        let b = compute_metrics(&p2, &l2, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_threshold_recall_is_one() {
        let m = compute_metrics(&[0.0, 0.1, 0.2], &[1, 0, 1], 0.0).unwrap();
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn empty_input_is_contract_error() {
        assert!(matches!(
            compute_metrics(&[], &[], 0.5),
            Err(Error::Contract(_))
        ));
    }
}
