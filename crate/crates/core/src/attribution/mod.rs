//! Token attribution by four methods, aggregation to sentence scores and
//! sentence ranking.

mod gradient;
mod lime;
mod rescale;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gradient::{input_gradient, integrated_gradients, Baseline, DEFAULT_IG_STEPS};
pub use lime::{lime, DEFAULT_LIME_SAMPLES, LIME_KERNEL_WIDTH};
pub use rescale::deeplift;

use crate::corpus::DocumentInstance;
use crate::error::{Error, Result};
use crate::model::{argmax, Classifier, EncodedInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    InputGradient,
    IntegratedGradients,
    #[serde(rename = "deeplift")]
    DeepLift,
    Lime,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::InputGradient,
        Method::IntegratedGradients,
        Method::DeepLift,
        Method::Lime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::InputGradient => "input-gradient",
            Method::IntegratedGradients => "integrated-gradients",
            Method::DeepLift => "deeplift",
            Method::Lime => "lime",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::UnsupportedMethod(format!(
                "`{s}` (expected one of: {})",
                Method::ALL.map(Method::name).join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionOptions {
    pub ig_steps: usize,
    pub lime_samples: usize,
    pub lime_seed: u64,
}

impl Default for AttributionOptions {
    fn default() -> Self {
        AttributionOptions {
            ig_steps: DEFAULT_IG_STEPS,
            lime_samples: DEFAULT_LIME_SAMPLES,
            lime_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub method: Method,
    pub target_class: usize,
    /// One signed score per input position.
    pub token_scores: Vec<f64>,
    /// Mean absolute token score per document sentence.
    pub sentence_scores: Vec<f64>,
    /// Sentence indices, best first.
    pub ranking: Vec<usize>,
    /// Surface form of every input position.
    pub tokens: Vec<String>,
    pub document_span: (usize, usize),
}

/// Token scores for `target_class` by `method`.
pub fn token_scores(
    model: &dyn Classifier,
    encoded: &EncodedInstance,
    target_class: usize,
    method: Method,
    options: &AttributionOptions,
) -> Result<Vec<f64>> {
    if target_class >= model.label_count() {
        return Err(Error::TargetClass {
            class: target_class,
            label_count: model.label_count(),
        });
    }
    match method {
        Method::InputGradient => input_gradient(model, encoded, target_class),
        Method::IntegratedGradients => {
            integrated_gradients(model, encoded, target_class, options.ig_steps, &Baseline::MaskDocument)
        }
        Method::DeepLift => deeplift(model, encoded, target_class, &Baseline::MaskDocument),
        Method::Lime => lime(model, encoded, target_class, options.lime_samples, options.lime_seed),
    }
}

/// Attributes the model's full-document prediction and ranks sentences.
pub fn attribute(
    model: &dyn Classifier,
    instance: &DocumentInstance,
    method: Method,
    options: &AttributionOptions,
) -> Result<AttributionResult> {
    let encoded = model.encode(instance)?;
    let probs = model.predict(&encoded)?;
    attribute_encoded(model, &encoded, argmax(&probs), method, options)
}

pub fn attribute_encoded(
    model: &dyn Classifier,
    encoded: &EncodedInstance,
    target_class: usize,
    method: Method,
    options: &AttributionOptions,
) -> Result<AttributionResult> {
    let scores = token_scores(model, encoded, target_class, method, options)?;
    let sentence = sentence_scores(&scores, encoded);
    let ranking = rank_sentences_excluding(&sentence, &fully_truncated(encoded));
    let tok = model.tokenizer();
    Ok(AttributionResult {
        method,
        target_class,
        tokens: encoded.token_ids.iter().map(|&i| tok.token(i).to_string()).collect(),
        token_scores: scores,
        sentence_scores: sentence,
        ranking,
        document_span: encoded.document_span,
    })
}

/// Sentences that contributed no tokens to the encoding.
pub fn fully_truncated(encoded: &EncodedInstance) -> BTreeSet<usize> {
    (0..encoded.n_sentences)
        .filter(|i| !encoded.sentence_spans.contains_key(i))
        .collect()
}

/// Mean absolute token score over each sentence's span; sentences without
/// tokens score 0. Query and special positions never contribute.
pub fn sentence_scores(token_scores: &[f64], encoded: &EncodedInstance) -> Vec<f64> {
    (0..encoded.n_sentences)
        .map(|i| match encoded.sentence_spans.get(&i) {
            Some(&(s, e)) if e > s && e <= token_scores.len() => {
                token_scores[s..e].iter().map(|v| v.abs()).sum::<f64>() / (e - s) as f64
            }
            _ => 0.0,
        })
        .collect()
}

/// Indices sorted by descending score, ties broken by ascending index.
pub fn rank_sentences(scores: &[f64]) -> Vec<usize> {
    rank_sentences_excluding(scores, &BTreeSet::new())
}

/// As [`rank_sentences`], with `last` placed after every other sentence.
pub fn rank_sentences_excluding(scores: &[f64], last: &BTreeSet<usize>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        last.contains(&a)
            .cmp(&last.contains(&b))
            .then_with(|| scores[b].total_cmp(&scores[a]))
            .then_with(|| a.cmp(&b))
    });
    order
}
