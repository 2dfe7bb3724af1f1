//! Evidence-selection baselines comparable to the sufficient-subset method.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentInstance, QueryKind};
use crate::error::{Error, Result};
use crate::model::{argmax, Classifier};
use crate::sufficiency::full_prediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    /// No sentences: the prediction comes from the query alone.
    Direct,
    FullDoc,
    /// Sentences mentioning either query entity.
    Ent,
    First2,
    First3,
    /// The two sentences that best support the prediction on their own.
    BestPair,
}

impl Selector {
    pub const ALL: [Selector; 6] = [
        Selector::Direct,
        Selector::FullDoc,
        Selector::Ent,
        Selector::First2,
        Selector::First3,
        Selector::BestPair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Selector::Direct => "direct",
            Selector::FullDoc => "fulldoc",
            Selector::Ent => "ent",
            Selector::First2 => "first2",
            Selector::First3 => "first3",
            Selector::BestPair => "bestpair",
        }
    }

    pub fn needs_model(self) -> bool {
        self == Selector::BestPair
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Selector::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown selector `{s}` (expected one of: {})",
                Selector::ALL.map(Selector::name).join(", ")
            ))
        })
    }
}

/// How BestPair scores a single sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairScoring {
    /// Probability of the full-document predicted class.
    #[default]
    FullPrediction,
    /// Probability of the sentence's own argmax class.
    OwnArgmax,
}

/// Selected sentence indices, ascending.
pub fn select_evidence(
    selector: Selector,
    instance: &DocumentInstance,
    model: Option<&dyn Classifier>,
) -> Result<Vec<usize>> {
    select_evidence_with(selector, instance, model, PairScoring::default())
}

pub fn select_evidence_with(
    selector: Selector,
    instance: &DocumentInstance,
    model: Option<&dyn Classifier>,
    scoring: PairScoring,
) -> Result<Vec<usize>> {
    let n = instance.n_sentences();
    match selector {
        Selector::Direct => Ok(Vec::new()),
        Selector::FullDoc => Ok((0..n).collect()),
        Selector::First2 => Ok((0..n.min(2)).collect()),
        Selector::First3 => Ok((0..n.min(3)).collect()),
        Selector::Ent => {
            let q = &instance.query;
            if q.kind != QueryKind::EntityPair {
                return Err(Error::UnsupportedCombination(format!(
                    "selector `ent` needs an entity-pair query; {} has a key-feature query",
                    instance.doc_id
                )));
            }
            let mut out: Vec<usize> = [&q.head, &q.tail]
                .into_iter()
                .flatten()
                .flat_map(|e| e.sentences.iter().copied())
                .filter(|&i| i < n)
                .collect();
            out.sort_unstable();
            out.dedup();
            Ok(out)
        }
        Selector::BestPair => {
            let model = model.ok_or_else(|| Error::InvalidArgument("selector `bestpair` needs a model".into()))?;
            best_pair(model, instance, scoring)
        }
    }
}

fn best_pair(model: &dyn Classifier, instance: &DocumentInstance, scoring: PairScoring) -> Result<Vec<usize>> {
    let n = instance.n_sentences();
    let (full_class, _) = full_prediction(model, instance)?;
    let mut scored = Vec::with_capacity(n);
    for i in 0..n {
        let probs = model.predict(&model.encode_subset(instance, &[i])?)?;
        let score = match scoring {
            PairScoring::FullPrediction => probs[full_class],
            PairScoring::OwnArgmax => probs[argmax(&probs)],
        };
        scored.push((i, score));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out: Vec<usize> = scored.into_iter().take(2).map(|(i, _)| i).collect();
    out.sort_unstable();
    Ok(out)
}
