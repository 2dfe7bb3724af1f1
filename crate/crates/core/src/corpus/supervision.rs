use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::types::{DocumentInstance, Split};
use crate::error::{Error, Result};

/// Keeps gold evidence on a uniformly sampled `fraction` of the train-split
/// instances and strips it from the rest. Val/test instances are untouched.
pub fn subsample_evidence_supervision(
    mut instances: Vec<DocumentInstance>,
    fraction: f64,
    seed: u64,
) -> Result<Vec<DocumentInstance>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config {
            field: "evidence_fraction".into(),
            reason: format!("{fraction} is not in [0, 1]"),
        });
    }
    let mut train: Vec<usize> = instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| inst.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    let keep = (fraction * train.len() as f64).round() as usize;
    train.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for &i in &train[keep..] {
        instances[i].gold_evidence = None;
    }
    Ok(instances)
}
