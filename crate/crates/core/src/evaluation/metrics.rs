use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Accuracy and macro-F1. Macro-F1 averages per-class F1 over classes that
/// occur in the golds or the predictions.
pub fn evaluate_labels(predictions: &[usize], golds: &[usize], label_count: usize) -> Result<LabelMetrics> {
    if predictions.len() != golds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} golds",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::Empty("no predictions to evaluate".into()));
    }
    if let Some(&bad) = predictions.iter().chain(golds).find(|&&c| c >= label_count) {
        return Err(Error::TargetClass {
            class: bad,
            label_count,
        });
    }
    let mut tp = vec![0usize; label_count];
    let mut pred_count = vec![0usize; label_count];
    let mut gold_count = vec![0usize; label_count];
    for (&p, &g) in predictions.iter().zip(golds) {
        pred_count[p] += 1;
        gold_count[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let present: Vec<usize> = (0..label_count)
        .filter(|&c| pred_count[c] > 0 || gold_count[c] > 0)
        .collect();
    let f1_sum: f64 = present
        .iter()
        .map(|&c| 2.0 * tp[c] as f64 / (pred_count[c] + gold_count[c]) as f64)
        .sum();
    Ok(LabelMetrics {
        accuracy: correct as f64 / golds.len() as f64,
        macro_f1: f1_sum / present.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set precision/recall/F1 of one predicted evidence set against gold.
pub fn evidence_scores(predicted: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> SetScores {
    let hit = predicted.intersection(gold).count() as f64;
    let precision = if predicted.is_empty() {
        0.0
    } else {
        hit / predicted.len() as f64
    };
    let recall = if gold.is_empty() { 0.0 } else { hit / gold.len() as f64 };
    let f1 = if hit == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    SetScores { precision, recall, f1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_length: f64,
    /// Instances that entered the averages.
    pub count: usize,
}

/// Instance-averaged evidence precision/recall/F1. Pairs with empty gold
/// evidence are skipped.
pub fn evaluate_evidence(predicted: &[BTreeSet<usize>], gold: &[BTreeSet<usize>]) -> Result<EvidenceMetrics> {
    if predicted.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predicted evidence sets for {} gold sets",
            predicted.len(),
            gold.len()
        )));
    }
    let mut acc = EvidenceMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        mean_length: 0.0,
        count: 0,
    };
    for (p, g) in predicted.iter().zip(gold) {
        if g.is_empty() {
            continue;
        }
        let s = evidence_scores(p, g);
        acc.precision += s.precision;
        acc.recall += s.recall;
        acc.f1 += s.f1;
        acc.mean_length += p.len() as f64;
        acc.count += 1;
    }
    if acc.count > 0 {
        let n = acc.count as f64;
        acc.precision /= n;
        acc.recall /= n;
        acc.f1 /= n;
        acc.mean_length /= n;
    }
    Ok(acc)
}
