//! Classifier contract, tokenization, input encoding and the compact
//! transformer backend with its differentiation tape.

mod classifier;
mod encoding;
pub mod tape;
mod tokenizer;
mod transformer;

pub use classifier::{
    argmax, predict_from_embeddings, probability_gradient, rescale_multipliers, Classifier, Differentiable,
    RescaleOutput,
};
pub use encoding::{encode, encode_subset, EncodedInstance, DOCRED_MAX_LEN};
pub use tape::{Linearization, Matrix, NodeId, Tape, UnaryFn};
pub use tokenizer::{split_words, Tokenizer, CLS, MASK, PAD, SEP, UNK};
pub use transformer::{CompactTransformer, ForwardInput, ForwardNodes, HeadInit, ModelConfig};
