use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Classifier, EncodedInstance};

pub const DEFAULT_LIME_SAMPLES: usize = 100;

/// Width of the exponential kernel over the fraction of masked tokens.
pub const LIME_KERNEL_WIDTH: f64 = 0.5;

const KEEP_PROBABILITY: f64 = 0.5;
const RIDGE: f64 = 1e-3;

/// Local linear surrogate over binary keep-masks of document tokens.
///
/// The first sample is the unperturbed input. The returned vector holds the
/// surrogate coefficient for each document position and 0 elsewhere.
pub fn lime(
    model: &dyn Classifier,
    encoded: &EncodedInstance,
    target_class: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_samples < 10 {
        return Err(Error::InvalidArgument(format!(
            "lime needs at least 10 samples, got {n_samples}"
        )));
    }
    if target_class >= model.label_count() {
        return Err(Error::TargetClass {
            class: target_class,
            label_count: model.label_count(),
        });
    }
    let positions: Vec<usize> = encoded.document_positions().collect();
    let m = positions.len();
    let mut scores = vec![0.0; encoded.len()];
    if m == 0 {
        return Ok(scores);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask_id = model.mask_token_id();
    let mut keeps: Vec<Vec<bool>> = Vec::with_capacity(n_samples);
    keeps.push(vec![true; m]);
    while keeps.len() < n_samples {
        keeps.push((0..m).map(|_| rng.random_bool(KEEP_PROBABILITY)).collect());
    }
    let perturbed: Vec<EncodedInstance> = keeps
        .iter()
        .map(|keep| {
            let mut e = encoded.clone();
            for (&pos, &k) in positions.iter().zip(keep) {
                if !k {
                    e.token_ids[pos] = mask_id;
                }
            }
            e
        })
        .collect();
    let targets: Vec<f64> = model
        .predict_many(&perturbed)?
        .into_iter()
        .map(|p| p[target_class])
        .collect();

    let spread =
        targets.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - targets.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if spread <= f64::EPSILON {
        log::warn!("lime: all perturbed outputs are identical; returning zero scores");
        return Ok(scores);
    }

    // Weighted ridge regression with an unpenalized intercept in column 0.
    let cols = m + 1;
    let mut xtwx = DMatrix::<f64>::zeros(cols, cols);
    let mut xtwy = DVector::<f64>::zeros(cols);
    let mut row = vec![0.0; cols];
    for (keep, &y) in keeps.iter().zip(&targets) {
        let masked = keep.iter().filter(|k| !**k).count() as f64 / m as f64;
        let w = (-(masked * masked) / (LIME_KERNEL_WIDTH * LIME_KERNEL_WIDTH)).exp();
        row[0] = 1.0;
        for (j, &k) in keep.iter().enumerate() {
            row[j + 1] = if k { 1.0 } else { 0.0 };
        }
        for a in 0..cols {
            if row[a] == 0.0 {
                continue;
            }
            xtwy[a] += w * row[a] * y;
            for b in 0..cols {
                xtwx[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for j in 1..cols {
        xtwx[(j, j)] += RIDGE;
    }
    let coef = xtwx
        .clone()
        .cholesky()
        .map(|c| c.solve(&xtwy))
        .or_else(|| xtwx.lu().solve(&xtwy))
        .ok_or_else(|| Error::Undefined("lime surrogate system is singular".into()))?;
    for (j, &pos) in positions.iter().enumerate() {
        scores[pos] = coef[j + 1];
    }
    Ok(scores)
}
