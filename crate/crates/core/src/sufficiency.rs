//! Predict-select-verify: grow a ranked prefix of sentences until the model
//! reproduces its full-document prediction with enough confidence.

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentInstance;
use crate::error::{Error, Result};
use crate::model::{argmax, Classifier};

pub const DEFAULT_LAMBDA: f64 = 0.8;

/// Largest document the exhaustive oracle accepts.
pub const ORACLE_MAX_SENTENCES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyVerdict {
    /// Selected sentence indices in ranking order.
    pub selected: Vec<usize>,
    pub verified: bool,
    pub full_prediction: usize,
    pub full_confidence: f64,
    /// Probability of `full_prediction` on the selected subset.
    pub subset_confidence: f64,
    pub steps_taken: usize,
    pub lambda: f64,
}

impl SufficiencyVerdict {
    pub fn ratio(&self) -> f64 {
        self.subset_confidence / self.full_confidence
    }

    pub fn selected_sorted(&self) -> Vec<usize> {
        let mut s = self.selected.clone();
        s.sort_unstable();
        s
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} is not in (0, 1]")));
    }
    Ok(())
}

fn passes(probs: &[f64], full_prediction: usize, full_confidence: f64, lambda: f64) -> bool {
    argmax(probs) == full_prediction && probs[full_prediction] >= lambda * full_confidence
}

/// Full-document prediction and its confidence, on the encoding the model actually sees.
pub fn full_prediction(model: &dyn Classifier, instance: &DocumentInstance) -> Result<(usize, f64)> {
    let probs = model.predict(&model.encode(instance)?)?;
    let class = argmax(&probs);
    Ok((class, probs[class]))
}

/// Evaluates ranked prefixes `{r1}, {r1, r2}, ...` and stops at the first
/// that keeps the full-document class as argmax with probability at least
/// `lambda` times the full-document confidence.
pub fn sufficient_subset(
    model: &dyn Classifier,
    instance: &DocumentInstance,
    ranking: &[usize],
    lambda: f64,
) -> Result<SufficiencyVerdict> {
    check_lambda(lambda)?;
    let n = instance.n_sentences();
    let mut seen = vec![false; n];
    if ranking.len() != n || !ranking.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true)) {
        return Err(Error::InvalidArgument(format!(
            "ranking is not a permutation of 0..{n} for {}",
            instance.doc_id
        )));
    }
    let (full_class, full_conf) = full_prediction(model, instance)?;
    let mut subset_conf = 0.0;
    for k in 1..=n {
        let kept = &ranking[..k];
        let probs = model.predict(&model.encode_subset(instance, kept)?)?;
        subset_conf = probs[full_class];
        if passes(&probs, full_class, full_conf, lambda) {
            return Ok(SufficiencyVerdict {
                selected: kept.to_vec(),
                verified: true,
                full_prediction: full_class,
                full_confidence: full_conf,
                subset_confidence: subset_conf,
                steps_taken: k,
                lambda,
            });
        }
    }
    // Unreachable for a deterministic model: the full prefix re-encodes the
    // full document. Reported rather than asserted.
    Ok(SufficiencyVerdict {
        selected: ranking.to_vec(),
        verified: false,
        full_prediction: full_class,
        full_confidence: full_conf,
        subset_confidence: subset_conf,
        steps_taken: n,
        lambda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessCheck {
    pub agrees: bool,
    pub full_prediction: usize,
    pub reduced_prediction: usize,
    pub reduced_confidence: f64,
}

/// Re-predicts from the evidence sentences alone (original order, same
/// query) and compares with the full-document prediction. An empty evidence
/// set is evaluated as the query-only input.
pub fn verify_faithfulness(
    model: &dyn Classifier,
    instance: &DocumentInstance,
    evidence: &[usize],
) -> Result<FaithfulnessCheck> {
    let (full_class, _) = full_prediction(model, instance)?;
    let probs = model.predict(&model.encode_subset(instance, evidence)?)?;
    let reduced = argmax(&probs);
    Ok(FaithfulnessCheck {
        agrees: reduced == full_class,
        full_prediction: full_class,
        reduced_prediction: reduced,
        reduced_confidence: probs[reduced],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub size: usize,
    /// First verifying subset in cardinality-then-lexicographic order.
    pub subset: Vec<usize>,
    pub subsets_evaluated: usize,
}

/// Exhaustive search for the smallest sentence subset passing both
/// verification conditions.
pub fn minimal_sufficient_oracle(
    model: &dyn Classifier,
    instance: &DocumentInstance,
    lambda: f64,
) -> Result<OracleResult> {
    check_lambda(lambda)?;
    let n = instance.n_sentences();
    if n > ORACLE_MAX_SENTENCES {
        return Err(Error::InvalidArgument(format!(
            "oracle enumerates 2^n - 1 subsets and accepts at most {ORACLE_MAX_SENTENCES} sentences; \
             {} has {n}. Use sufficient_subset for longer documents",
            instance.doc_id
        )));
    }
    let (full_class, full_conf) = full_prediction(model, instance)?;
    let mut evaluated = 0;
    for size in 1..=n {
        for subset in combinations(n, size) {
            evaluated += 1;
            let probs = model.predict(&model.encode_subset(instance, &subset)?)?;
            if passes(&probs, full_class, full_conf, lambda) {
                return Ok(OracleResult {
                    size,
                    subset,
                    subsets_evaluated: evaluated,
                });
            }
        }
    }
    Err(Error::Undefined(format!(
        "no subset of {} reproduces the full-document prediction",
        instance.doc_id
    )))
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(current.clone());
        let Some(i) = (0..k).rev().find(|&i| current[i] < n - k + i) else {
            return out;
        };
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(
            combinations(4, 2),
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        let total: usize = (1..=6).map(|k| combinations(6, k).len()).sum();
        assert_eq!(total, 63);
    }

    #[test]
    fn lambda_bounds() {
        assert!(check_lambda(0.8).is_ok());
        assert!(check_lambda(1.0).is_ok());
        assert!(check_lambda(0.0).is_err());
        assert!(check_lambda(1.2).is_err());
    }
}
