use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bootstrap::{paired_bootstrap, DEFAULT_RESAMPLES};
use super::metrics::{evaluate_evidence, evaluate_labels, evidence_scores};
use crate::corpus::DocumentInstance;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA: &str = "evident-report/1";

/// Hex SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 of the JSON form of `value`.
pub fn fingerprint<T: Serialize>(value: &T) -> Result<String> {
    Ok(digest(&serde_json::to_vec(value)?))
}

/// One system's output for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePrediction {
    pub doc_id: String,
    pub prediction: usize,
    /// Selected evidence sentence indices.
    pub evidence: Vec<usize>,
    /// Prediction from the evidence sentences alone.
    #[serde(default)]
    pub reduced_prediction: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub metric: String,
    pub baseline: String,
    pub candidate: String,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub system: String,
    pub instances: usize,
    pub label_accuracy: f64,
    pub label_macro_f1: f64,
    pub reduced_label_accuracy: f64,
    pub reduced_label_macro_f1: f64,
    pub evidence_precision: f64,
    pub evidence_recall: f64,
    pub evidence_f1: f64,
    pub mean_evidence_length: f64,
    /// Instances with gold evidence that entered the evidence metrics.
    pub evidence_instances: usize,
    pub faithfulness_agreement: f64,
    #[serde(default)]
    pub significance: BTreeMap<String, Significance>,
    #[serde(default)]
    pub config_fingerprint: Option<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Pairs each gold instance with its prediction by `doc_id`.
pub fn align<'a>(
    predictions: &'a [InstancePrediction],
    gold: &'a [DocumentInstance],
) -> Result<Vec<(&'a InstancePrediction, &'a DocumentInstance)>> {
    let by_id: HashMap<&str, &InstancePrediction> = predictions.iter().map(|p| (p.doc_id.as_str(), p)).collect();
    if by_id.len() != predictions.len() {
        return Err(Error::InvalidArgument("duplicate doc_id in predictions".into()));
    }
    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.doc_id.as_str()).collect();
    let mut missing: Vec<&str> = gold_ids.iter().filter(|id| !by_id.contains_key(*id)).copied().collect();
    missing.extend(by_id.keys().filter(|id| !gold_ids.contains(*id)).copied());
    if !missing.is_empty() {
        missing.sort_unstable();
        let shown: Vec<&str> = missing.iter().take(5).copied().collect();
        return Err(Error::InvalidArgument(format!(
            "instance ids differ between predictions and gold ({} mismatched, e.g. {})",
            missing.len(),
            shown.join(", ")
        )));
    }
    Ok(gold.iter().map(|g| (by_id[g.doc_id.as_str()], g)).collect())
}

fn gold_evidence(g: &DocumentInstance) -> BTreeSet<usize> {
    g.gold_evidence.clone().unwrap_or_default()
}

/// Label, reduced-document, evidence and faithfulness metrics for one system.
pub fn build_report(
    system: &str,
    predictions: &[InstancePrediction],
    gold: &[DocumentInstance],
    label_count: usize,
) -> Result<EvalReport> {
    let pairs = align(predictions, gold)?;
    let mut reduced = Vec::with_capacity(pairs.len());
    for (p, _) in &pairs {
        reduced.push(p.reduced_prediction.ok_or_else(|| {
            Error::MissingArtifact(format!("reduced_prediction for {} in system {system}", p.doc_id))
        })?);
    }
    let preds: Vec<usize> = pairs.iter().map(|(p, _)| p.prediction).collect();
    let golds: Vec<usize> = pairs.iter().map(|(_, g)| g.label).collect();
    let full = evaluate_labels(&preds, &golds, label_count)?;
    let red = evaluate_labels(&reduced, &golds, label_count)?;
    let predicted_sets: Vec<BTreeSet<usize>> = pairs
        .iter()
        .map(|(p, _)| p.evidence.iter().copied().collect())
        .collect();
    let gold_sets: Vec<BTreeSet<usize>> = pairs.iter().map(|(_, g)| gold_evidence(g)).collect();
    let ev = evaluate_evidence(&predicted_sets, &gold_sets)?;
    let agree = preds.iter().zip(&reduced).filter(|(a, b)| a == b).count();
    Ok(EvalReport {
        schema: REPORT_SCHEMA.into(),
        system: system.into(),
        instances: pairs.len(),
        label_accuracy: full.accuracy,
        label_macro_f1: full.macro_f1,
        reduced_label_accuracy: red.accuracy,
        reduced_label_macro_f1: red.macro_f1,
        evidence_precision: ev.precision,
        evidence_recall: ev.recall,
        evidence_f1: ev.f1,
        mean_evidence_length: ev.mean_length,
        evidence_instances: ev.count,
        faithfulness_agreement: agree as f64 / pairs.len() as f64,
        significance: BTreeMap::new(),
        config_fingerprint: None,
    })
}

/// Per-instance evidence F1 over gold instances with evidence, in gold order.
pub fn per_instance_evidence_f1(predictions: &[InstancePrediction], gold: &[DocumentInstance]) -> Result<Vec<f64>> {
    Ok(align(predictions, gold)?
        .into_iter()
        .filter(|(_, g)| g.has_evidence())
        .map(|(p, g)| evidence_scores(&p.evidence.iter().copied().collect(), &gold_evidence(g)).f1)
        .collect())
}

/// Per-instance label correctness (1 or 0), in gold order.
pub fn per_instance_correct(predictions: &[InstancePrediction], gold: &[DocumentInstance]) -> Result<Vec<f64>> {
    Ok(align(predictions, gold)?
        .into_iter()
        .map(|(p, g)| f64::from(u8::from(p.prediction == g.label)))
        .collect())
}

/// One-sided tests of `candidate` improving on `baseline` for evidence F1 and
/// label accuracy.
pub fn compare_systems(
    baseline: (&str, &[InstancePrediction]),
    candidate: (&str, &[InstancePrediction]),
    gold: &[DocumentInstance],
    seed: u64,
) -> Result<Vec<Significance>> {
    let mut out = Vec::new();
    let metrics: [(&str, fn(&[InstancePrediction], &[DocumentInstance]) -> Result<Vec<f64>>); 2] = [
        ("evidence_f1", per_instance_evidence_f1),
        ("label_accuracy", per_instance_correct),
    ];
    for (metric, f) in metrics {
        let a = f(baseline.1, gold)?;
        let b = f(candidate.1, gold)?;
        if a.is_empty() {
            continue;
        }
        let r = paired_bootstrap(&a, &b, DEFAULT_RESAMPLES, seed)?;
        out.push(Significance {
            metric: metric.into(),
            baseline: baseline.0.into(),
            candidate: candidate.0.into(),
            p_value: r.p_value,
            significant: r.significant,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightedSentence {
    pub index: usize,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub selected: bool,
    pub gold: bool,
}

/// Per-instance review record with selected and gold sentences marked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightedInstance {
    pub doc_id: String,
    pub label: usize,
    pub prediction: usize,
    pub sentences: Vec<HighlightedSentence>,
}

pub fn highlight(prediction: &InstancePrediction, instance: &DocumentInstance) -> HighlightedInstance {
    let selected: BTreeSet<usize> = prediction.evidence.iter().copied().collect();
    let gold = gold_evidence(instance);
    HighlightedInstance {
        doc_id: instance.doc_id.clone(),
        label: instance.label,
        prediction: prediction.prediction,
        sentences: instance
            .sentences
            .iter()
            .enumerate()
            .map(|(i, text)| HighlightedSentence {
                index: i,
                text: text.clone(),
                score: prediction.sentence_scores.as_ref().and_then(|s| s.get(i).copied()),
                selected: selected.contains(&i),
                gold: gold.contains(&i),
            })
            .collect(),
    }
}
