use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tokenizer::Tokenizer;
use crate::corpus::DocumentInstance;
use crate::error::{Error, Result};

/// Default cap on input length for adapted DocRED.
pub const DOCRED_MAX_LEN: usize = 296;

/// Token ids laid out as `[CLS] query [SEP] (query [SEP]) document [SEP]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInstance {
    pub token_ids: Vec<u32>,
    /// Sentence index (in the original document) to half-open token span.
    pub sentence_spans: BTreeMap<usize, (usize, usize)>,
    /// Query tokens, including any separator between query segments.
    pub query_span: (usize, usize),
    /// Half-open span of all document tokens.
    pub document_span: (usize, usize),
    /// Sentences fully or partially dropped by the length cap.
    pub truncated_sentences: BTreeSet<usize>,
    /// Number of sentences in the source document.
    pub n_sentences: usize,
}

impl EncodedInstance {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn document_positions(&self) -> std::ops::Range<usize> {
        self.document_span.0..self.document_span.1
    }

    pub fn has_document_tokens(&self) -> bool {
        self.document_span.1 > self.document_span.0
    }

    /// Sentence owning token position `pos`, if it lies in the document region.
    pub fn sentence_at(&self, pos: usize) -> Option<usize> {
        self.sentence_spans
            .iter()
            .find(|(_, &(s, e))| pos >= s && pos < e)
            .map(|(&i, _)| i)
    }

    /// Same layout with every document token replaced by `mask_id`.
    pub fn masked_document(&self, mask_id: u32) -> EncodedInstance {
        let mut out = self.clone();
        for id in &mut out.token_ids[self.document_span.0..self.document_span.1] {
            *id = mask_id;
        }
        out
    }
}

/// Encodes the full document, clipping tokens past `max_len`.
pub fn encode(instance: &DocumentInstance, tokenizer: &Tokenizer, max_len: usize) -> Result<EncodedInstance> {
    let all: Vec<usize> = (0..instance.sentences.len()).collect();
    encode_subset(instance, tokenizer, max_len, &all)
}

/// Encodes only the sentences in `kept`, concatenated in original document order.
pub fn encode_subset(
    instance: &DocumentInstance,
    tokenizer: &Tokenizer,
    max_len: usize,
    kept: &[usize],
) -> Result<EncodedInstance> {
    let n = instance.sentences.len();
    let kept: BTreeSet<usize> = kept.iter().copied().collect();
    if let Some(&bad) = kept.iter().find(|&&i| i >= n) {
        return Err(Error::Encoding(format!(
            "sentence {bad} out of range for document {} with {n} sentences",
            instance.doc_id
        )));
    }
    let (cls, sep) = (tokenizer.cls_id(), tokenizer.sep_id());

    let mut ids = vec![cls];
    let segments = instance.query.segments();
    for seg in &segments {
        ids.extend(tokenizer.encode_text(seg));
        ids.push(sep);
    }
    let query_span = (1, ids.len() - 1);
    if ids.len() + 1 > max_len {
        return Err(Error::Encoding(format!(
            "query prefix of {} tokens leaves no room under cap {max_len}",
            ids.len()
        )));
    }

    let doc_start = ids.len();
    let mut budget = max_len - ids.len() - 1;
    let mut spans = BTreeMap::new();
    let mut truncated = BTreeSet::new();
    for &i in &kept {
        let toks = tokenizer.encode_text(&instance.sentences[i]);
        let take = toks.len().min(budget);
        if take < toks.len() {
            truncated.insert(i);
        }
        if take > 0 {
            spans.insert(i, (ids.len(), ids.len() + take));
            ids.extend_from_slice(&toks[..take]);
            budget -= take;
        }
    }
    let document_span = (doc_start, ids.len());
    ids.push(sep);

    Ok(EncodedInstance {
        token_ids: ids,
        sentence_spans: spans,
        query_span,
        document_span,
        truncated_sentences: truncated,
        n_sentences: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityRef, Split, TaskQuery};

    fn doc(sentences: &[&str], query: TaskQuery) -> DocumentInstance {
        DocumentInstance {
            doc_id: "d".into(),
            sentences: sentences.iter().map(|s| s.to_string()).collect(),
            query,
            label: 0,
            gold_evidence: None,
            split: Split::Test,
        }
    }

    fn tokenizer_for(d: &DocumentInstance) -> Tokenizer {
        let mut texts: Vec<&str> = d.sentences.iter().map(String::as_str).collect();
        texts.extend(d.query.segments());
        Tokenizer::fit(texts, 1)
    }

    #[test]
    fn entity_pair_layout() {
        let q = TaskQuery::entity_pair(
            EntityRef {
                name: "Ada".into(),
                sentences: [0].into(),
            },
            EntityRef {
                name: "London".into(),
                sentences: [0].into(),
            },
        );
        let d = doc(&["Ada lived in London .", "She wrote notes ."], q);
        let tok = tokenizer_for(&d);
        let enc = encode(&d, &tok, DOCRED_MAX_LEN).unwrap();
        let words: Vec<&str> = enc.token_ids.iter().map(|&i| tok.token(i)).collect();
        assert_eq!(
            words,
            [
                "[CLS]", "ada", "[SEP]", "london", "[SEP]", "ada", "lived", "in", "london", ".", "she", "wrote",
                "notes", ".", "[SEP]"
            ]
        );
        assert_eq!(enc.query_span, (1, 4));
        assert_eq!(enc.sentence_spans[&0], (5, 10));
        assert_eq!(enc.sentence_spans[&1], (10, 14));
        assert_eq!(enc.document_span, (5, 14));
        assert!(enc.truncated_sentences.is_empty());
    }

    #[test]
    fn single_sentence_generous_cap() {
        let d = doc(&["just one sentence here ."], TaskQuery::key_feature("finding"));
        let tok = tokenizer_for(&d);
        let enc = encode(&d, &tok, 64).unwrap();
        assert!(enc.truncated_sentences.is_empty());
        assert_eq!(enc.sentence_spans.len(), 1);
        assert_eq!(enc.sentence_spans[&0], enc.document_span);
    }

    #[test]
    fn cap_drops_trailing_sentences() {
        // Twelve sentences of exactly four tokens each.
        let sents: Vec<String> = (0..12).map(|i| format!("word{i} a b .")).collect();
        let refs: Vec<&str> = sents.iter().map(String::as_str).collect();
        let d = doc(&refs, TaskQuery::key_feature("finding"));
        let tok = tokenizer_for(&d);
        // prefix [CLS] finding [SEP] = 3, end marker 1, nine sentences = 36.
        let enc = encode(&d, &tok, 3 + 36 + 1).unwrap();
        assert_eq!(enc.truncated_sentences, BTreeSet::from([9, 10, 11]));
        assert_eq!(enc.sentence_spans.len(), 9);
        assert_eq!(enc.len(), 40);
        // Two more tokens of room clip sentence 9 partially.
        let enc = encode(&d, &tok, 42).unwrap();
        assert_eq!(enc.truncated_sentences, BTreeSet::from([9, 10, 11]));
        assert_eq!(enc.sentence_spans[&9], (39, 41));
    }

    #[test]
    fn query_too_long_is_an_error() {
        let d = doc(&["a ."], TaskQuery::key_feature("a very long feature name"));
        let tok = tokenizer_for(&d);
        assert!(matches!(encode(&d, &tok, 6), Err(Error::Encoding(_))));
        assert!(encode(&d, &tok, 8).is_ok());
    }

    #[test]
    fn full_subset_equals_full_encoding() {
        let d = doc(&["a b .", "c d .", "e f ."], TaskQuery::key_feature("x"));
        let tok = tokenizer_for(&d);
        for cap in [8, 10, 64] {
            assert_eq!(
                encode_subset(&d, &tok, cap, &[2, 0, 1]).unwrap(),
                encode(&d, &tok, cap).unwrap()
            );
        }
    }

    #[test]
    fn subset_keeps_original_order_and_indices() {
        let d = doc(&["a b .", "c d .", "e f ."], TaskQuery::key_feature("x"));
        let tok = tokenizer_for(&d);
        let enc = encode_subset(&d, &tok, 64, &[2, 0]).unwrap();
        assert_eq!(enc.sentence_spans.keys().copied().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(enc.sentence_spans[&0], (3, 6));
        assert_eq!(enc.sentence_spans[&2], (6, 9));
        let empty = encode_subset(&d, &tok, 64, &[]).unwrap();
        assert!(!empty.has_document_tokens());
        assert_eq!(empty.len(), 4);
    }
}
