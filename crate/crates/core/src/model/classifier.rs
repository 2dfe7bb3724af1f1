use ndarray::Array2;
use rayon::prelude::*;

use super::encoding::{encode, encode_subset, EncodedInstance};
use super::tape::{Linearization, Matrix, NodeId, Tape};
use super::tokenizer::Tokenizer;
use crate::corpus::DocumentInstance;
use crate::error::{Error, Result};

/// A document classifier producing a distribution over `label_count` classes.
pub trait Classifier: Send + Sync {
    fn label_count(&self) -> usize;

    /// Maximum encoded sequence length.
    fn max_len(&self) -> usize;

    fn tokenizer(&self) -> &Tokenizer;

    fn predict(&self, encoded: &EncodedInstance) -> Result<Vec<f64>>;

    fn predict_many(&self, encoded: &[EncodedInstance]) -> Result<Vec<Vec<f64>>> {
        encoded.par_iter().map(|e| self.predict(e)).collect()
    }

    /// Access to the embedding pathway, for backends that have one.
    fn as_differentiable(&self) -> Option<&dyn Differentiable> {
        None
    }

    fn encode(&self, instance: &DocumentInstance) -> Result<EncodedInstance> {
        encode(instance, self.tokenizer(), self.max_len())
    }

    fn encode_subset(&self, instance: &DocumentInstance, kept: &[usize]) -> Result<EncodedInstance> {
        encode_subset(instance, self.tokenizer(), self.max_len(), kept)
    }

    fn mask_token_id(&self) -> u32 {
        self.tokenizer().mask_id()
    }
}

/// A classifier whose prediction is a recorded program over input embeddings.
pub trait Differentiable: Classifier {
    fn embedding_width(&self) -> usize;

    /// Input embedding matrix (`len × width`) for an encoded sequence.
    fn embed(&self, encoded: &EncodedInstance) -> Result<Matrix>;

    /// Records the forward pass starting at the `embeddings` node and
    /// returns the `1 × label_count` probability node.
    fn record_forward(&self, tape: &mut Tape, embeddings: NodeId, encoded: &EncodedInstance) -> Result<NodeId>;
}

pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &p)| if p > best.1 { (i, p) } else { best },
        )
        .0
}

fn check_embeddings(model: &dyn Differentiable, encoded: &EncodedInstance, embeddings: &Matrix) -> Result<()> {
    let expected = (encoded.len(), model.embedding_width());
    if embeddings.dim() != expected {
        return Err(Error::Shape {
            expected: format!("{expected:?}"),
            actual: format!("{:?}", embeddings.dim()),
        });
    }
    if !encoded.has_document_tokens() {
        return Err(Error::Shape {
            expected: "a non-empty document region".into(),
            actual: "zero-width document region".into(),
        });
    }
    if encoded.len() > model.max_len() {
        return Err(Error::LengthOverflow {
            len: encoded.len(),
            max: model.max_len(),
        });
    }
    Ok(())
}

/// Class distribution computed from explicit input embeddings.
pub fn predict_from_embeddings(
    model: &dyn Differentiable,
    encoded: &EncodedInstance,
    embeddings: &Matrix,
) -> Result<Vec<f64>> {
    check_embeddings(model, encoded, embeddings)?;
    let mut tape = Tape::new();
    let input = tape.leaf(embeddings.clone());
    let probs = model.record_forward(&mut tape, input, encoded)?;
    Ok(tape.value(probs).row(0).to_vec())
}

/// Probabilities and the gradient of `probs[class]` with respect to the embeddings.
pub fn probability_gradient(
    model: &dyn Differentiable,
    encoded: &EncodedInstance,
    embeddings: &Matrix,
    class: usize,
) -> Result<(Vec<f64>, Matrix)> {
    check_embeddings(model, encoded, embeddings)?;
    let mut tape = Tape::new();
    let input = tape.leaf(embeddings.clone());
    let probs = model.record_forward(&mut tape, input, encoded)?;
    let seed = one_hot_row(model.label_count(), class)?;
    let grads = tape.backward(probs, seed, Linearization::Gradient)?;
    let g = grads[input]
        .clone()
        .unwrap_or_else(|| Array2::zeros(embeddings.raw_dim()));
    Ok((tape.value(probs).row(0).to_vec(), g))
}

/// DeepLIFT multipliers of `probs[class]` with respect to the embeddings,
/// relative to `baseline` embeddings, together with both output distributions.
pub fn rescale_multipliers(
    model: &dyn Differentiable,
    encoded: &EncodedInstance,
    embeddings: &Matrix,
    baseline: &Matrix,
    class: usize,
) -> Result<RescaleOutput> {
    check_embeddings(model, encoded, embeddings)?;
    check_embeddings(model, encoded, baseline)?;
    let mut reference = Tape::new();
    let ref_input = reference.leaf(baseline.clone());
    let ref_probs = model.record_forward(&mut reference, ref_input, encoded)?;
    let mut tape = Tape::new();
    let input = tape.leaf(embeddings.clone());
    let probs = model.record_forward(&mut tape, input, encoded)?;
    if input != ref_input || probs != ref_probs {
        return Err(Error::Shape {
            expected: "identical programs for input and baseline".into(),
            actual: "diverging tapes".into(),
        });
    }
    let seed = one_hot_row(model.label_count(), class)?;
    let grads = tape.backward(probs, seed, Linearization::Rescale { reference: &reference })?;
    Ok(RescaleOutput {
        multipliers: grads[input]
            .clone()
            .unwrap_or_else(|| Array2::zeros(embeddings.raw_dim())),
        probs: tape.value(probs).row(0).to_vec(),
        baseline_probs: reference.value(ref_probs).row(0).to_vec(),
    })
}

pub struct RescaleOutput {
    pub multipliers: Matrix,
    pub probs: Vec<f64>,
    pub baseline_probs: Vec<f64>,
}

fn one_hot_row(d: usize, class: usize) -> Result<Matrix> {
    if class >= d {
        return Err(Error::TargetClass { class, label_count: d });
    }
    let mut seed = Array2::zeros((1, d));
    seed[[0, class]] = 1.0;
    Ok(seed)
}
