#![allow(dead_code)]

pub mod mocks;

use evident::corpus::{generate_synthetic_corpus, DocumentInstance, Split, SyntheticConfig};
use evident::model::{CompactTransformer, HeadInit, ModelConfig, Tokenizer};

pub fn corpus(n_docs: usize, rate: f64, seed: u64) -> Vec<DocumentInstance> {
    generate_synthetic_corpus(&SyntheticConfig {
        n_docs,
        spurious_correlation_rate: rate,
        seed,
        ..Default::default()
    })
    .unwrap()
}

pub fn split(docs: &[DocumentInstance], s: Split) -> Vec<DocumentInstance> {
    docs.iter().filter(|d| d.split == s).cloned().collect()
}

pub fn tokenizer(docs: &[DocumentInstance]) -> Tokenizer {
    Tokenizer::fit_instances(docs, 1)
}

/// Untrained model with a random output head, so gradients are non-trivial.
pub fn random_model(docs: &[DocumentInstance], label_count: usize, seed: u64) -> CompactTransformer {
    let config = ModelConfig {
        d_model: 16,
        d_ff: 32,
        head_init: HeadInit::Random,
        init_seed: seed,
        ..ModelConfig::compact(label_count, 128)
    };
    CompactTransformer::new(config, tokenizer(docs)).unwrap()
}
