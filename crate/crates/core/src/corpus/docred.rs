//! Loading the public DocRED JSON release and recasting it as
//! document-level relation classification over entity-pair queries.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{self, DeserializeSeed, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use super::types::{DocumentInstance, EntityRef, Split, TaskQuery};
use crate::error::{Error, Result};

/// Name of the negative class introduced by the adaptation. Always index 0.
pub const NA_LABEL: &str = "NA";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct RawMention {
    pub name: String,
    pub sent_id: usize,
    pub pos: (usize, usize),
    #[serde(rename = "type", default)]
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct RawFact {
    #[serde(rename = "h")]
    pub head: usize,
    #[serde(rename = "t")]
    pub tail: usize,
    #[serde(rename = "r")]
    pub relation: String,
    #[serde(default)]
    pub evidence: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct RawRecord {
    #[serde(default)]
    title: String,
    sents: Vec<Vec<String>>,
    #[serde(rename = "vertexSet")]
    vertex_set: Vec<Vec<RawMention>>,
    labels: Vec<RawFact>,
}

/// A DocRED document with its original sentence segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub title: String,
    pub sentences: Vec<String>,
    /// Entities, each a list of mentions.
    pub entities: Vec<Vec<RawMention>>,
    pub facts: Vec<RawFact>,
}

impl RawDocument {
    fn from_record(index: usize, rec: RawRecord) -> Result<Self> {
        let schema = |message: String| Error::DocumentSchema { index, message };
        let n_sent = rec.sents.len();
        let n_ent = rec.vertex_set.len();
        for (e, mentions) in rec.vertex_set.iter().enumerate() {
            if mentions.is_empty() {
                return Err(schema(format!("entity {e} has no mentions")));
            }
            if let Some(m) = mentions.iter().find(|m| m.sent_id >= n_sent) {
                return Err(schema(format!(
                    "entity {e} mention `{}` points at sentence {} of {n_sent}",
                    m.name, m.sent_id
                )));
            }
        }
        for fact in &rec.labels {
            if fact.head >= n_ent || fact.tail >= n_ent {
                return Err(schema(format!(
                    "fact ({}, {}, {}) references a missing entity",
                    fact.head, fact.tail, fact.relation
                )));
            }
            if let Some(&bad) = fact.evidence.iter().find(|&&i| i >= n_sent) {
                return Err(schema(format!("evidence index {bad} out of range")));
            }
        }
        Ok(RawDocument {
            title: rec.title,
            sentences: rec.sents.iter().map(|toks| toks.join(" ")).collect(),
            entities: rec.vertex_set,
            facts: rec.labels,
        })
    }

    fn entity_ref(&self, e: usize) -> EntityRef {
        let mentions = &self.entities[e];
        EntityRef {
            name: mentions[0].name.clone(),
            sentences: mentions.iter().map(|m| m.sent_id).collect(),
        }
    }
}

struct DocumentSeq;

impl<'de> Visitor<'de> for DocumentSeq {
    type Value = Vec<(usize, std::result::Result<RawRecord, String>)>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an array of DocRED documents")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Self::Value, A::Error> {
        let mut out = Vec::new();
        loop {
            let index = out.len();
            // Schema errors are data errors and are reported per document;
            // syntax errors abort the whole sequence.
            match seq.next_element::<serde_json::Value>() {
                Ok(Some(value)) => {
                    let rec = RawRecord::deserialize(value).map_err(|e| e.to_string());
                    out.push((index, rec));
                }
                Ok(None) => return Ok(out),
                Err(e) => {
                    return Err(de::Error::custom(format!("document {index}: {e}")));
                }
            }
        }
    }
}

struct DocumentSeqSeed;

impl<'de> DeserializeSeed<'de> for DocumentSeqSeed {
    type Value = Vec<(usize, std::result::Result<RawRecord, String>)>;

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> std::result::Result<Self::Value, D::Error> {
        d.deserialize_seq(DocumentSeq)
    }
}

/// Parses DocRED JSON text.
pub fn parse_docred(text: &str) -> Result<Vec<RawDocument>> {
    let mut de = serde_json::Deserializer::from_str(text);
    let records = DocumentSeqSeed.deserialize(&mut de).map_err(|e| {
        let msg = e.to_string();
        match doc_index_of(&msg) {
            Some(index) => Error::DocumentParse { index, message: msg },
            None => Error::Parse(msg),
        }
    })?;
    de.end().map_err(|e| Error::Parse(e.to_string()))?;
    records
        .into_iter()
        .map(|(index, rec)| {
            let rec = rec.map_err(|message| Error::DocumentSchema { index, message })?;
            RawDocument::from_record(index, rec)
        })
        .collect()
}

fn doc_index_of(msg: &str) -> Option<usize> {
    let rest = msg.strip_prefix("document ")?;
    rest.split(':').next()?.parse().ok()
}

pub fn load_docred(path: impl AsRef<Path>) -> Result<Vec<RawDocument>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_docred(&text)
}

/// Relation inventory of an adapted dataset. Index 0 is always [`NA_LABEL`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub names: Vec<String>,
}

impl LabelSpace {
    /// `NA` followed by every relation in `docs`, sorted.
    pub fn from_documents(docs: &[RawDocument]) -> Self {
        let rels: BTreeSet<&str> = docs
            .iter()
            .flat_map(|d| d.facts.iter().map(|f| f.relation.as_str()))
            .collect();
        let mut names = vec![NA_LABEL.to_string()];
        names.extend(rels.into_iter().map(str::to_string));
        LabelSpace { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone)]
pub struct AdaptOptions {
    pub na_fraction: f64,
    pub seed: u64,
    pub split: Split,
    /// Reuse a label space (e.g. the train split's) instead of deriving one.
    pub labels: Option<LabelSpace>,
}

impl AdaptOptions {
    pub fn new(na_fraction: f64, seed: u64) -> Self {
        AdaptOptions {
            na_fraction,
            seed,
            split: Split::Train,
            labels: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdaptedDataset {
    pub instances: Vec<DocumentInstance>,
    pub labels: LabelSpace,
    /// Documents with fewer than two entities, which cannot supply NA pairs.
    pub skipped_for_na: usize,
    pub n_documents: usize,
}

/// Recasts raw DocRED documents as one instance per labeled fact plus
/// sampled NA entity pairs making up `na_fraction` of the total.
pub fn adapt_docred(raw_docs: &[RawDocument], opts: &AdaptOptions) -> Result<AdaptedDataset> {
    if !(0.0..1.0).contains(&opts.na_fraction) {
        return Err(Error::Config {
            field: "na_fraction".into(),
            reason: format!("{} is not in [0, 1)", opts.na_fraction),
        });
    }
    let labels = opts
        .labels
        .clone()
        .unwrap_or_else(|| LabelSpace::from_documents(raw_docs));

    let n_pos: usize = raw_docs.iter().map(|d| d.facts.len()).sum();
    let target_na = (n_pos as f64 * opts.na_fraction / (1.0 - opts.na_fraction)).round() as usize;

    let candidates: Vec<Vec<(usize, usize)>> = raw_docs.iter().map(na_candidates).collect();
    let skipped_for_na = raw_docs.iter().filter(|d| d.entities.len() < 2).count();
    if skipped_for_na > 0 && target_na > 0 {
        log::info!("{skipped_for_na} documents have fewer than two entities and supply no NA pairs");
    }
    let caps: Vec<usize> = raw_docs
        .iter()
        .zip(&candidates)
        .map(|(d, c)| c.len().min(d.facts.len() + 2))
        .collect();
    let quotas = allocate_quotas(&caps, target_na, opts.seed);
    let allocated: usize = quotas.iter().sum();
    if allocated < target_na {
        log::warn!("only {allocated} of {target_na} requested NA pairs are available");
    }

    let mut instances = Vec::with_capacity(n_pos + allocated);
    for (doc_idx, doc) in raw_docs.iter().enumerate() {
        for fact in &doc.facts {
            let label = labels.index_of(&fact.relation).ok_or_else(|| Error::DocumentSchema {
                index: doc_idx,
                message: format!("relation `{}` not in label space", fact.relation),
            })?;
            let evidence: BTreeSet<usize> = fact.evidence.iter().copied().collect();
            instances.push(DocumentInstance {
                doc_id: format!("{}-{doc_idx}/{}-{}/{}", opts.split, fact.head, fact.tail, fact.relation),
                sentences: doc.sentences.clone(),
                query: TaskQuery::entity_pair(doc.entity_ref(fact.head), doc.entity_ref(fact.tail)),
                label,
                gold_evidence: (!evidence.is_empty()).then_some(evidence),
                split: opts.split,
            });
        }
        if quotas[doc_idx] > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (doc_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut pairs = candidates[doc_idx].clone();
            pairs.shuffle(&mut rng);
            pairs.truncate(quotas[doc_idx]);
            pairs.sort_unstable();
            for (h, t) in pairs {
                instances.push(DocumentInstance {
                    doc_id: format!("{}-{doc_idx}/{h}-{t}/{NA_LABEL}", opts.split),
                    sentences: doc.sentences.clone(),
                    query: TaskQuery::entity_pair(doc.entity_ref(h), doc.entity_ref(t)),
                    label: 0,
                    gold_evidence: None,
                    split: opts.split,
                });
            }
        }
    }

    Ok(AdaptedDataset {
        instances,
        labels,
        skipped_for_na,
        n_documents: raw_docs.len(),
    })
}

/// Ordered entity pairs with no labeled fact in that direction.
fn na_candidates(doc: &RawDocument) -> Vec<(usize, usize)> {
    let labeled: HashSet<(usize, usize)> = doc.facts.iter().map(|f| (f.head, f.tail)).collect();
    let n = doc.entities.len();
    (0..n)
        .flat_map(|h| (0..n).map(move |t| (h, t)))
        .filter(|&(h, t)| h != t && !labeled.contains(&(h, t)))
        .collect()
}

/// Spreads `total` evenly over documents, respecting per-document caps.
/// Leftover single units go to documents in a seeded random order.
fn allocate_quotas(caps: &[usize], total: usize, seed: u64) -> Vec<usize> {
    let mut quotas = vec![0usize; caps.len()];
    let mut remaining = total;
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    loop {
        let open: Vec<usize> = order.iter().copied().filter(|&i| quotas[i] < caps[i]).collect();
        if remaining == 0 || open.is_empty() {
            break;
        }
        let share = remaining / open.len();
        if share == 0 {
            for &i in open.iter().take(remaining) {
                quotas[i] += 1;
            }
            break;
        }
        for &i in &open {
            let add = share.min(caps[i] - quotas[i]);
            quotas[i] += add;
            remaining -= add;
        }
    }
    quotas
}

/// Summary numbers in the layout of the usual dataset statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub documents: usize,
    pub instances: usize,
    pub mean_words_per_instance: f64,
    pub mean_sentences_per_instance: f64,
    pub label_count: usize,
    pub na_percent: f64,
    pub with_evidence: usize,
}

pub fn dataset_stats(instances: &[DocumentInstance], label_count: usize, na_label: Option<usize>) -> DatasetStats {
    let n = instances.len().max(1) as f64;
    let docs: BTreeMap<&str, ()> = instances
        .iter()
        .map(|i| (i.doc_id.split('/').next().unwrap_or(&i.doc_id), ()))
        .collect();
    let words: usize = instances
        .iter()
        .map(|i| i.sentences.iter().map(|s| s.split_whitespace().count()).sum::<usize>())
        .sum();
    let sents: usize = instances.iter().map(|i| i.sentences.len()).sum();
    let na = na_label.map_or(0, |na| instances.iter().filter(|i| i.label == na).count());
    DatasetStats {
        documents: docs.len(),
        instances: instances.len(),
        mean_words_per_instance: words as f64 / n,
        mean_sentences_per_instance: sents as f64 / n,
        label_count,
        na_percent: 100.0 * na as f64 / n,
        with_evidence: instances.iter().filter(|i| i.has_evidence()).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIXTURE: &str = r#"[
      {"title": "Alpha",
       "sents": [["Ada", "Lovelace", "was", "born", "in", "London", "."],
                 ["She", "worked", "with", "Charles", "Babbage", "."],
                 ["Babbage", "designed", "the", "Analytical", "Engine", "."]],
       "vertexSet": [[{"name": "Ada Lovelace", "sent_id": 0, "pos": [0, 2], "type": "PER"}],
                     [{"name": "London", "sent_id": 0, "pos": [5, 6], "type": "LOC"}],
                     [{"name": "Charles Babbage", "sent_id": 1, "pos": [3, 5], "type": "PER"},
                      {"name": "Babbage", "sent_id": 2, "pos": [0, 1], "type": "PER"}],
                     [{"name": "Analytical Engine", "sent_id": 2, "pos": [3, 5], "type": "MISC"}]],
       "labels": [{"h": 0, "t": 1, "r": "P19", "evidence": [0]},
                  {"h": 3, "t": 2, "r": "P170", "evidence": [1, 2]}]},
      {"title": "Beta",
       "sents": [["Paris", "is", "the", "capital", "of", "France", "."],
                 ["It", "lies", "on", "the", "Seine", "."]],
       "vertexSet": [[{"name": "Paris", "sent_id": 0, "pos": [0, 1], "type": "LOC"}],
                     [{"name": "France", "sent_id": 0, "pos": [5, 6], "type": "LOC"}],
                     [{"name": "Seine", "sent_id": 1, "pos": [4, 5], "type": "LOC"}]],
       "labels": [{"h": 0, "t": 1, "r": "P17", "evidence": [0]},
                  {"h": 1, "t": 0, "r": "P36", "evidence": [0]},
                  {"h": 0, "t": 2, "r": "P206", "evidence": [1]}]}
    ]"#;

    #[test]
    fn fixture_loads_with_evidence() {
        let docs = parse_docred(FIXTURE).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].sentences[0], "Ada Lovelace was born in London .");
        assert_eq!(docs[0].facts[1].evidence, vec![1, 2]);
        assert_eq!(docs[1].facts.len(), 3);
        assert_eq!(docs[1].facts[2].evidence, vec![1]);
    }

    #[test]
    fn empty_array_is_empty() {
        assert!(parse_docred("[]").unwrap().is_empty());
    }

    #[test]
    fn syntax_error_names_document() {
        let text =
            r#"[{"title": "a", "sents": [["x"]], "vertexSet": [], "labels": []}, {"title": "b", "sents": [["x"]], ]"#;
        match parse_docred(text) {
            Err(Error::DocumentParse { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_key_is_schema_error() {
        let text = r#"[{"title": "a", "sents": [["x"]], "labels": []}]"#;
        match parse_docred(text) {
            Err(Error::DocumentSchema { index, message }) => {
                assert_eq!(index, 0);
                assert!(message.contains("vertexSet"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quotas_respect_caps_and_total() {
        let q = allocate_quotas(&[1, 5, 0, 3], 6, 3);
        assert_eq!(q.iter().sum::<usize>(), 6);
        assert!(q.iter().zip([1, 5, 0, 3]).all(|(a, c)| *a <= c));
        assert_eq!(q[2], 0);
        // Insufficient capacity hands out everything.
        assert_eq!(allocate_quotas(&[1, 1], 10, 0), vec![1, 1]);
    }

    #[test]
    fn no_na_when_fraction_zero() {
        let docs = parse_docred(FIXTURE).unwrap();
        let out = adapt_docred(&docs, &AdaptOptions::new(0.0, 1)).unwrap();
        assert_eq!(out.instances.len(), 5);
        assert!(out.instances.iter().all(|i| i.label != 0));
        assert!(out.instances.iter().all(|i| i.has_evidence()));
    }

    #[test]
    fn na_pairs_are_unlabeled_pairs() {
        let docs = parse_docred(FIXTURE).unwrap();
        let out = adapt_docred(&docs, &AdaptOptions::new(0.5, 7)).unwrap();
        assert_eq!(out.labels.len(), 6);
        let na: Vec<_> = out.instances.iter().filter(|i| i.label == 0).collect();
        assert_eq!(na.len(), 5);
        for inst in na {
            assert!(inst.gold_evidence.is_none());
            let (h, t) = (inst.query.head.as_ref().unwrap(), inst.query.tail.as_ref().unwrap());
            assert_ne!(h.name, t.name);
        }
    }
}
