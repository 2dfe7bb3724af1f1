use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{probability_gradient, Classifier, Differentiable, EncodedInstance, Matrix};

pub const DEFAULT_IG_STEPS: usize = 30;

/// Reference input for path and difference-from-reference methods.
#[derive(Debug, Clone)]
pub enum Baseline {
    /// Document positions replaced by the mask token; query and specials kept.
    MaskDocument,
    /// Explicit reference embeddings.
    Embeddings(Matrix),
}

pub(crate) fn differentiable<'a>(model: &'a dyn Classifier, method: &str) -> Result<&'a dyn Differentiable> {
    model
        .as_differentiable()
        .ok_or_else(|| Error::UnsupportedMethod(format!("{method} needs a differentiable model backend")))
}

pub(crate) fn baseline_embeddings(
    model: &dyn Differentiable,
    encoded: &EncodedInstance,
    baseline: &Baseline,
) -> Result<Matrix> {
    match baseline {
        Baseline::MaskDocument => model.embed(&encoded.masked_document(model.mask_token_id())),
        Baseline::Embeddings(m) => Ok(m.clone()),
    }
}

/// Row-wise sum of an elementwise product.
pub(crate) fn row_dot(a: &Matrix, b: &Matrix) -> Vec<f64> {
    (a * b).rows().into_iter().map(|r| r.sum()).collect()
}

/// Gradient × input: per token, the target probability's gradient dotted
/// with that token's embedding.
pub fn input_gradient(model: &dyn Classifier, encoded: &EncodedInstance, target_class: usize) -> Result<Vec<f64>> {
    let model = differentiable(model, "input-gradient")?;
    let emb = model.embed(encoded)?;
    let (_, grad) = probability_gradient(model, encoded, &emb, target_class)?;
    Ok(row_dot(&grad, &emb))
}

/// Midpoint Riemann sum of the gradient along the straight path from the
/// baseline embeddings to the input embeddings, times the input difference.
pub fn integrated_gradients(
    model: &dyn Classifier,
    encoded: &EncodedInstance,
    target_class: usize,
    steps: usize,
    baseline: &Baseline,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "integrated gradients needs at least one step".into(),
        ));
    }
    let model = differentiable(model, "integrated-gradients")?;
    let emb = model.embed(encoded)?;
    let base = baseline_embeddings(model, encoded, baseline)?;
    if base.dim() != emb.dim() {
        return Err(Error::Shape {
            expected: format!("{:?}", emb.dim()),
            actual: format!("{:?}", base.dim()),
        });
    }
    let diff = &emb - &base;
    let grads: Vec<Matrix> = (0..steps)
        .into_par_iter()
        .map(|k| {
            let alpha = (k as f64 + 0.5) / steps as f64;
            let point = &base + &(&diff * alpha);
            probability_gradient(model, encoded, &point, target_class).map(|(_, g)| g)
        })
        .collect::<Result<_>>()?;
    let mut total = Array2::zeros(emb.raw_dim());
    for g in &grads {
        total += g;
    }
    total /= steps as f64;
    Ok(row_dot(&total, &diff))
}
