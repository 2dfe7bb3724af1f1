use super::gradient::{baseline_embeddings, differentiable, row_dot, Baseline};
use crate::error::Result;
use crate::model::{rescale_multipliers, Classifier, EncodedInstance};

/// DeepLIFT contributions: rescale-rule multipliers times the difference
/// between input and baseline embeddings, summed over embedding width.
///
/// The contributions sum to `p(target | input) - p(target | baseline)`.
pub fn deeplift(
    model: &dyn Classifier,
    encoded: &EncodedInstance,
    target_class: usize,
    baseline: &Baseline,
) -> Result<Vec<f64>> {
    let model = differentiable(model, "deeplift")?;
    let emb = model.embed(encoded)?;
    let base = baseline_embeddings(model, encoded, baseline)?;
    let out = rescale_multipliers(model, encoded, &emb, &base, target_class)?;
    Ok(row_dot(&out.multipliers, &(&emb - &base)))
}
