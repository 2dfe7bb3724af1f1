use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentInstance;
use crate::error::{Error, Result};
use crate::model::{EncodedInstance, NodeId, Tape, UnaryFn};

/// Cross-entropy `-ln p[gold]`.
pub fn loss_classification(probs: &[f64], gold: usize) -> f64 {
    -probs[gold].ln()
}

/// Document-region token positions inside the spans of `evidence` sentences.
pub fn evidence_positions(encoded: &EncodedInstance, evidence: &BTreeSet<usize>) -> Vec<usize> {
    evidence
        .iter()
        .filter_map(|s| encoded.sentence_spans.get(s))
        .flat_map(|&(start, end)| start..end)
        .collect()
}

/// `-ln` of the attention mass on evidence tokens.
///
/// Returns `Ok(None)` when every evidence sentence was truncated away.
pub fn loss_attention_reg(alpha: &[f64], encoded: &EncodedInstance, evidence: &BTreeSet<usize>) -> Result<Option<f64>> {
    if evidence.is_empty() {
        return Err(Error::InvalidArgument("attention loss needs non-empty evidence".into()));
    }
    if alpha.len() != encoded.len() {
        return Err(Error::Shape {
            expected: format!("{} attention weights", encoded.len()),
            actual: format!("{}", alpha.len()),
        });
    }
    let positions = evidence_positions(encoded, evidence);
    if positions.is_empty() {
        return Ok(None);
    }
    let mass: f64 = positions.iter().map(|&i| alpha[i]).sum();
    Ok(Some(-mass.ln()))
}

/// `-H(P) + ln d`: zero at the uniform distribution, `ln d` at a one-hot.
pub fn loss_entropy_max(probs: &[f64]) -> f64 {
    let neg_entropy: f64 = probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum();
    neg_entropy + (probs.len() as f64).ln()
}

/// A reduced document `D \ E` whose prediction should be uninformative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyExample {
    pub source_doc_id: String,
    /// Indices of the source sentences kept, ascending.
    pub kept: Vec<usize>,
    pub sentences: Vec<String>,
}

/// Builds `D \ E` for an evidence-supervised instance. Returns `None` when
/// there is no evidence or the evidence covers the whole document.
pub fn make_entropy_example(instance: &DocumentInstance) -> Option<EntropyExample> {
    let evidence = instance.gold_evidence.as_ref().filter(|e| !e.is_empty())?;
    let kept: Vec<usize> = (0..instance.n_sentences()).filter(|i| !evidence.contains(i)).collect();
    if kept.is_empty() {
        return None;
    }
    Some(EntropyExample {
        source_doc_id: instance.doc_id.clone(),
        sentences: kept.iter().map(|&i| instance.sentences[i].clone()).collect(),
        kept,
    })
}

pub fn make_entropy_examples(instances: &[DocumentInstance]) -> Vec<EntropyExample> {
    instances.iter().filter_map(make_entropy_example).collect()
}

/// Records `-log_softmax(logits)[gold]`.
pub fn record_classification(tape: &mut Tape, logits: NodeId, gold: usize) -> NodeId {
    let ls = tape.log_softmax_rows(logits);
    let picked = tape.sum_cols(ls, &[gold]);
    tape.scale(picked, -1.0)
}

/// Records `-ln sum(attention[positions])`; `attention` is a `1 × len` node.
pub fn record_attention(tape: &mut Tape, attention: NodeId, positions: &[usize]) -> NodeId {
    let mass = tape.sum_cols(attention, positions);
    let ln = tape.unary(mass, UnaryFn::Ln);
    tape.scale(ln, -1.0)
}

/// Records `sum p ln p + ln d` from `1 × d` logits.
pub fn record_entropy(tape: &mut Tape, logits: NodeId) -> NodeId {
    let d = tape.value(logits).ncols();
    let p = tape.softmax_rows(logits);
    let lp = tape.log_softmax_rows(logits);
    let plp = tape.mul(p, lp);
    let s = tape.sum_all(plp);
    tape.add_scalar(s, (d as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Split, TaskQuery};
    use crate::model::{encode, Linearization, Tokenizer};
    use ndarray::Array2;

    fn instance(n: usize, evidence: &[usize]) -> DocumentInstance {
        DocumentInstance {
            doc_id: "d".into(),
            sentences: (0..n).map(|i| format!("sentence number {i} here")).collect(),
            query: TaskQuery::key_feature("finding"),
            label: 0,
            gold_evidence: Some(evidence.iter().copied().collect()),
            split: Split::Train,
        }
    }

    #[test]
    fn classification_edges() {
        assert_eq!(loss_classification(&[0.0, 1.0], 1), 0.0);
        assert!((loss_classification(&[0.25; 4], 2) - 4f64.ln()).abs() < 1e-12);
        // -ln 0.7 by hand: 0.356674943...
        assert!((loss_classification(&[0.1, 0.7, 0.2], 1) - 0.356_674_943_938_732_4).abs() < 1e-12);
    }

    #[test]
    fn entropy_edges() {
        assert!(loss_entropy_max(&[1.0 / 3.0; 3]).abs() < 1e-12);
        assert!((loss_entropy_max(&[0.0, 1.0, 0.0]) - 3f64.ln()).abs() < 1e-12);
        let h = -(0.5f64 * 0.5f64.ln() + 0.3 * 0.3f64.ln() + 0.2 * 0.2f64.ln());
        assert!((h - 1.0297).abs() < 1e-4);
        assert!((loss_entropy_max(&[0.5, 0.3, 0.2]) - 0.0689).abs() < 1e-4);
    }

    #[test]
    fn attention_mass_arithmetic() {
        let tok = Tokenizer::fit(["sentence number 0 1 2 3 here finding"], 1);
        let inst = instance(4, &[1]);
        let enc = encode(&inst, &tok, 64).unwrap();
        let (s, e) = enc.sentence_spans[&1];
        let mut alpha = vec![0.0; enc.len()];
        let share = 0.25 / (e - s) as f64;
        for a in &mut alpha[s..e] {
            *a = share;
        }
        alpha[0] = 0.75;
        let l = loss_attention_reg(&alpha, &enc, &inst.gold_evidence.clone().unwrap())
            .unwrap()
            .unwrap();
        assert!((l - 1.386).abs() < 1e-3);

        let mut all = vec![0.0; enc.len()];
        all[s] = 1.0;
        let zero = loss_attention_reg(&all, &enc, &inst.gold_evidence.clone().unwrap())
            .unwrap()
            .unwrap();
        assert_eq!(zero, 0.0);

        // moving mass from a non-evidence to an evidence token lowers the loss
        let mut moved = alpha.clone();
        moved[0] -= 0.1;
        moved[s] += 0.1;
        let lower = loss_attention_reg(&moved, &enc, &inst.gold_evidence.clone().unwrap())
            .unwrap()
            .unwrap();
        assert!(lower < l);
    }

    #[test]
    fn truncated_evidence_is_skipped() {
        let tok = Tokenizer::fit(["sentence number 0 1 2 3 here finding"], 1);
        let inst = instance(4, &[3]);
        let enc = encode(&inst, &tok, 12).unwrap();
        assert!(!enc.sentence_spans.contains_key(&3));
        let alpha = vec![1.0 / enc.len() as f64; enc.len()];
        assert_eq!(
            loss_attention_reg(&alpha, &enc, &inst.gold_evidence.unwrap()).unwrap(),
            None
        );
    }

    #[test]
    fn entropy_examples() {
        let ex = make_entropy_example(&instance(5, &[1, 3])).unwrap();
        assert_eq!(ex.kept, vec![0, 2, 4]);
        assert_eq!(ex.sentences[1], "sentence number 2 here");
        assert!(make_entropy_example(&instance(5, &[])).is_none());
        assert!(make_entropy_example(&instance(2, &[0, 1])).is_none());
        let mut none = instance(3, &[]);
        none.gold_evidence = None;
        assert!(make_entropy_example(&none).is_none());
    }

    fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut up = x.to_vec();
                let mut dn = x.to_vec();
                up[i] += h;
                dn[i] -= h;
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect()
    }

    fn softmax(z: &[f64]) -> Vec<f64> {
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    fn tape_grad(z: &[f64], build: impl Fn(&mut Tape, NodeId) -> NodeId) -> Vec<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(Array2::from_shape_vec((1, z.len()), z.to_vec()).unwrap());
        let out = build(&mut tape, x);
        let g = tape
            .backward(out, Array2::ones((1, 1)), Linearization::Gradient)
            .unwrap();
        g[x].as_ref().unwrap().row(0).to_vec()
    }

    #[test]
    fn attention_gradient_matches_finite_differences() {
        let z = [0.3, -1.2, 0.8, 0.1, -0.4, 1.5];
        let positions = [1, 2];
        let analytic = tape_grad(&z, |t, x| {
            let a = t.softmax_rows(x);
            record_attention(t, a, &positions)
        });
        let numeric = fd_grad(
            |v| -positions.iter().map(|&i| softmax(v)[i]).sum::<f64>().ln(),
            &z,
            1e-5,
        );
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-7, "{a} vs {n}");
        }
    }

    #[test]
    fn classification_and_entropy_gradients() {
        let z = [0.5, -0.2, 1.1];
        let ce = tape_grad(&z, |t, x| record_classification(t, x, 2));
        let ce_fd = fd_grad(|v| loss_classification(&softmax(v), 2), &z, 1e-5);
        let ent = tape_grad(&z, record_entropy);
        let ent_fd = fd_grad(|v| loss_entropy_max(&softmax(v)), &z, 1e-5);
        for (a, n) in ce.iter().zip(&ce_fd).chain(ent.iter().zip(&ent_fd)) {
            assert!((a - n).abs() < 1e-7, "{a} vs {n}");
        }
        // uniform prediction is a stationary point of the entropy loss
        let at_uniform = tape_grad(&[0.7, 0.7, 0.7], record_entropy);
        assert!(at_uniform.iter().all(|g| g.abs() < 1e-12));
        let fd_uniform = fd_grad(|v| loss_entropy_max(&softmax(v)), &[0.7, 0.7, 0.7], 1e-4);
        assert!(fd_uniform.iter().all(|g| g.abs() < 1e-8));
    }
}
