use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Estimated probability that B does not improve on A.
    pub p_value: f64,
    pub significant: bool,
    pub mean_a: f64,
    pub mean_b: f64,
}

/// One-sided paired bootstrap testing whether system B improves on A.
///
/// Instance indices are resampled with replacement; `p` is the fraction of
/// resamples where `mean(B) < mean(A)`, with ties counted as one half.
pub fn paired_bootstrap(scores_a: &[f64], scores_b: &[f64], n_resamples: usize, seed: u64) -> Result<BootstrapResult> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired scores differ in length: {} vs {}",
            scores_a.len(),
            scores_b.len()
        )));
    }
    if scores_a.is_empty() || n_resamples == 0 {
        return Err(Error::Empty("bootstrap needs scores and at least one resample".into()));
    }
    let n = scores_a.len();
    let diffs: Vec<f64> = scores_b.iter().zip(scores_a).map(|(b, a)| b - a).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worse = 0.0;
    for _ in 0..n_resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += diffs[rng.random_range(0..n)];
        }
        // Compare on the summed difference; exact zero is a tie.
        if sum < 0.0 {
            worse += 1.0;
        } else if sum == 0.0 {
            worse += 0.5;
        }
    }
    let p_value = worse / n_resamples as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(BootstrapResult {
        p_value,
        significant: p_value < SIGNIFICANCE_LEVEL,
        mean_a: mean(scores_a),
        mean_b: mean(scores_b),
    })
}
