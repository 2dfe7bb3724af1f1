use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_evidence, evaluate_labels};
use super::report::InstancePrediction;
use crate::attribution::{attribute, AttributionOptions, AttributionResult, Method};
use crate::baselines::{select_evidence_with, PairScoring, Selector};
use crate::corpus::DocumentInstance;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::sufficiency::{sufficient_subset, verify_faithfulness, SufficiencyVerdict};

pub const SWEEP_LAMBDAS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub prediction: InstancePrediction,
    pub attribution: AttributionResult,
    pub verdict: SufficiencyVerdict,
}

/// Attribution, sufficient subset and reduced-document prediction for one instance.
pub fn explain_sufficient(
    model: &dyn Classifier,
    instance: &DocumentInstance,
    method: Method,
    options: &AttributionOptions,
    lambda: f64,
) -> Result<Explanation> {
    let attribution = attribute(model, instance, method, options)?;
    let verdict = sufficient_subset(model, instance, &attribution.ranking, lambda)?;
    let evidence = verdict.selected_sorted();
    let check = verify_faithfulness(model, instance, &evidence)?;
    Ok(Explanation {
        prediction: InstancePrediction {
            doc_id: instance.doc_id.clone(),
            prediction: verdict.full_prediction,
            evidence,
            reduced_prediction: Some(check.reduced_prediction),
            sentence_scores: Some(attribution.sentence_scores.clone()),
        },
        attribution,
        verdict,
    })
}

/// Baseline evidence with its reduced-document prediction.
pub fn explain_baseline(
    model: &dyn Classifier,
    instance: &DocumentInstance,
    selector: Selector,
    scoring: PairScoring,
) -> Result<InstancePrediction> {
    let evidence = select_evidence_with(selector, instance, Some(model), scoring)?;
    let check = verify_faithfulness(model, instance, &evidence)?;
    Ok(InstancePrediction {
        doc_id: instance.doc_id.clone(),
        prediction: check.full_prediction,
        evidence,
        reduced_prediction: Some(check.reduced_prediction),
        sentence_scores: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub evidence_precision: f64,
    pub evidence_recall: f64,
    pub evidence_f1: f64,
    pub mean_evidence_length: f64,
    pub label_accuracy: f64,
    pub verified_fraction: f64,
}

/// Evidence quality of the sufficient subset at each `lambda`; the
/// attribution ranking is computed once per instance.
pub fn lambda_sweep(
    model: &dyn Classifier,
    instances: &[DocumentInstance],
    method: Method,
    options: &AttributionOptions,
    lambdas: &[f64],
) -> Result<Vec<SweepRow>> {
    if instances.is_empty() {
        return Err(Error::Empty("no instances to sweep".into()));
    }
    let rankings: Vec<Vec<usize>> = instances
        .par_iter()
        .map(|inst| attribute(model, inst, method, options).map(|a| a.ranking))
        .collect::<Result<_>>()?;
    let golds: Vec<usize> = instances.iter().map(|i| i.label).collect();
    let gold_sets: Vec<BTreeSet<usize>> = instances
        .iter()
        .map(|i| i.gold_evidence.clone().unwrap_or_default())
        .collect();
    lambdas
        .iter()
        .map(|&lambda| {
            let verdicts: Vec<SufficiencyVerdict> = instances
                .par_iter()
                .zip(&rankings)
                .map(|(inst, r)| sufficient_subset(model, inst, r, lambda))
                .collect::<Result<_>>()?;
            let preds: Vec<usize> = verdicts.iter().map(|v| v.full_prediction).collect();
            let sets: Vec<BTreeSet<usize>> = verdicts.iter().map(|v| v.selected.iter().copied().collect()).collect();
            let ev = evaluate_evidence(&sets, &gold_sets)?;
            let labels = evaluate_labels(&preds, &golds, model.label_count())?;
            Ok(SweepRow {
                lambda,
                evidence_precision: ev.precision,
                evidence_recall: ev.recall,
                evidence_f1: ev.f1,
                mean_evidence_length: ev.mean_length,
                label_accuracy: labels.accuracy,
                verified_fraction: verdicts.iter().filter(|v| v.verified).count() as f64 / verdicts.len() as f64,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "lambda,evidence_precision,evidence_recall,evidence_f1,mean_evidence_length,label_accuracy,verified_fraction\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.lambda,
            r.evidence_precision,
            r.evidence_recall,
            r.evidence_f1,
            r.mean_evidence_length,
            r.label_accuracy,
            r.verified_fraction
        ));
    }
    out
}
