use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentInstance;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

/// Lowercasing word-level tokenizer; punctuation characters become tokens of their own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Tokenizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Tokenizer {
    fn from(vocab: Vec<String>) -> Self {
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Tokenizer { vocab, index }
    }
}

impl From<Tokenizer> for Vec<String> {
    fn from(t: Tokenizer) -> Self {
        t.vocab
    }
}

pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if ch.is_alphanumeric() || ch == '_' || ch == '\'' || ch == '-' {
                word.extend(ch.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

impl Tokenizer {
    /// Builds a vocabulary over `texts`; words seen fewer than `min_count` times map to `[UNK]`.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        for text in texts {
            for w in split_words(text) {
                let c = counts.entry(w.clone()).or_insert(0);
                if *c == 0 {
                    order.push(w);
                }
                *c += 1;
            }
        }
        let mut vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        vocab.extend(
            order
                .into_iter()
                .filter(|w| counts[w] >= min_count.max(1) && !SPECIALS.contains(&w.as_str())),
        );
        Tokenizer::from(vocab)
    }

    /// Vocabulary over the sentences and query text of `instances`.
    pub fn fit_instances(instances: &[DocumentInstance], min_count: usize) -> Self {
        Tokenizer::fit(
            instances
                .iter()
                .flat_map(|i| i.sentences.iter().map(String::as_str).chain(i.query.segments())),
            min_count,
        )
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    fn special(&self, token: &str) -> u32 {
        self.id(token).expect("special tokens are always in the vocabulary")
    }

    pub fn unk_id(&self) -> u32 {
        self.special(UNK)
    }
    pub fn cls_id(&self) -> u32 {
        self.special(CLS)
    }
    pub fn sep_id(&self) -> u32 {
        self.special(SEP)
    }
    pub fn mask_id(&self) -> u32 {
        self.special(MASK)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.vocab[id as usize]
    }

    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        let unk = self.unk_id();
        split_words(text).iter().map(|w| self.id(w).unwrap_or(unk)).collect()
    }
}
