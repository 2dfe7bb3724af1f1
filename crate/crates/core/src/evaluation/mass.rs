use std::collections::HashSet;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::attribution::AttributionResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenMass {
    /// Mean over instances of the average mass per target occurrence, in percent.
    pub mean_average: f64,
    /// Mean over instances of the largest mass on one occurrence, in percent.
    pub mean_max: f64,
    /// Instances containing the token.
    pub instances: usize,
}

pub fn attribution_mass_on_token(results: &[AttributionResult], token: &str) -> Result<TokenMass> {
    attribution_mass_on_tokens(results, &[token])
}

/// Normalized absolute attribution over the document region that falls on
/// occurrences of any of `tokens`. Instances with all-zero document
/// attribution are skipped.
pub fn attribution_mass_on_tokens(results: &[AttributionResult], tokens: &[&str]) -> Result<TokenMass> {
    let targets: HashSet<&str> = tokens.iter().copied().collect();
    let (mut avg_sum, mut max_sum, mut count, mut zero) = (0.0, 0.0, 0usize, 0usize);
    for r in results {
        let (start, end) = r.document_span;
        let end = end.min(r.token_scores.len()).min(r.tokens.len());
        let hits: Vec<usize> = (start..end)
            .filter(|&i| targets.contains(r.tokens[i].as_str()))
            .collect();
        if hits.is_empty() {
            continue;
        }
        let total: f64 = r.token_scores[start..end].iter().map(|s| s.abs()).sum();
        if total <= 0.0 {
            zero += 1;
            continue;
        }
        let masses: Vec<f64> = hits.iter().map(|&i| r.token_scores[i].abs() / total).collect();
        avg_sum += masses.iter().sum::<f64>() / masses.len() as f64;
        max_sum += masses.iter().cloned().fold(0.0, f64::max);
        count += 1;
    }
    if zero > 0 {
        warn!("{zero} instances with zero document attribution skipped");
    }
    if count == 0 {
        return Err(Error::Undefined(format!(
            "no instance contains {} with non-zero attribution",
            tokens.join(", ")
        )));
    }
    Ok(TokenMass {
        mean_average: 100.0 * avg_sum / count as f64,
        mean_max: 100.0 * max_sum / count as f64,
        instances: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::Method;

    fn result(tokens: &[&str], scores: &[f64], span: (usize, usize)) -> AttributionResult {
        AttributionResult {
            method: Method::DeepLift,
            target_class: 0,
            token_scores: scores.to_vec(),
            sentence_scores: vec![],
            ranking: vec![],
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            document_span: span,
        }
    }

    #[test]
    fn uniform_over_ten_tokens() {
        let mut toks = vec!["w"; 10];
        toks[3] = "effect";
        let r = result(&toks, &[1.0; 10], (0, 10));
        let m = attribution_mass_on_token(&[r], "effect").unwrap();
        assert!((m.mean_average - 10.0).abs() < 1e-12);
        assert!((m.mean_max - 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_instance_fixture() {
        // instance 1: query tokens outside the span are ignored; doc |scores| = 1,2,-3,4 -> total 10
        // "effect" at doc offsets 1 and 3: masses 0.2 and 0.4 -> avg 0.3, max 0.4
        let a = result(
            &["[CLS]", "effect", "[SEP]", "a", "effect", "b", "effect", "[SEP]"],
            &[9.0, 9.0, 9.0, 1.0, 2.0, -3.0, 4.0, 9.0],
            (3, 7),
        );
        // instance 2: one occurrence carrying 0.5 of the mass
        let b = result(&["[CLS]", "effect", "c"], &[0.0, -1.0, 1.0], (1, 3));
        // instance 3: no occurrence, ignored
        let c = result(&["[CLS]", "d"], &[0.0, 1.0], (1, 2));
        let m = attribution_mass_on_token(&[a, b, c], "effect").unwrap();
        assert_eq!(m.instances, 2);
        assert!((m.mean_average - 100.0 * (0.3 + 0.5) / 2.0).abs() < 1e-9);
        assert!((m.mean_max - 100.0 * (0.4 + 0.5) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn absent_token_is_undefined() {
        let r = result(&["[CLS]", "a"], &[0.0, 1.0], (1, 2));
        assert!(matches!(
            attribution_mass_on_token(&[r], "effect"),
            Err(Error::Undefined(_))
        ));
    }
}
