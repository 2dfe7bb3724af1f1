use evident::corpus::{DocumentInstance, Split, TaskQuery};
use evident::model::{Classifier, Differentiable, EncodedInstance, Matrix, NodeId, Tape, Tokenizer};
use evident::Result;
use ndarray::Array2;

pub fn six_token_doc() -> (Tokenizer, DocumentInstance) {
    let tok = Tokenizer::fit(["a b c d e f q"], 1);
    let doc = DocumentInstance {
        doc_id: "six".into(),
        sentences: vec!["a b c".into(), "d e f".into()],
        query: TaskQuery::key_feature("q"),
        label: 0,
        gold_evidence: None,
        split: Split::Test,
    };
    (tok, doc)
}

/// Fixed output regardless of input; optionally exposes a (disconnected)
/// embedding pathway.
pub struct Constant {
    pub tokenizer: Tokenizer,
    pub probs: Vec<f64>,
    pub differentiable: bool,
}

impl Classifier for Constant {
    fn label_count(&self) -> usize {
        self.probs.len()
    }
    fn max_len(&self) -> usize {
        64
    }
    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }
    fn predict(&self, _: &EncodedInstance) -> Result<Vec<f64>> {
        Ok(self.probs.clone())
    }
    fn as_differentiable(&self) -> Option<&dyn Differentiable> {
        self.differentiable.then_some(self as &dyn Differentiable)
    }
}

impl Differentiable for Constant {
    fn embedding_width(&self) -> usize {
        2
    }
    fn embed(&self, encoded: &EncodedInstance) -> Result<Matrix> {
        Ok(Array2::from_shape_fn((encoded.len(), 2), |(i, j)| {
            encoded.token_ids[i] as f64 + j as f64
        }))
    }
    fn record_forward(&self, tape: &mut Tape, _: NodeId, _: &EncodedInstance) -> Result<NodeId> {
        Ok(tape.leaf(Array2::from_shape_vec((1, self.probs.len()), self.probs.clone()).unwrap()))
    }
}

/// Output `ones · E · W`: linear in the embeddings, so every attribution
/// method reduces to gradient times input difference.
pub struct Linear {
    pub tokenizer: Tokenizer,
    pub weights: Matrix,
    /// Record a row-wise max on the path, which has no rescale rule.
    pub with_max: bool,
}

impl Linear {
    fn embed_ids(&self, ids: &[u32]) -> Matrix {
        let w = self.weights.nrows();
        Array2::from_shape_fn((ids.len(), w), |(i, j)| {
            ((ids[i] as f64 + 1.0) * (j as f64 + 0.5)).sin()
        })
    }
}

impl Classifier for Linear {
    fn label_count(&self) -> usize {
        self.weights.ncols()
    }
    fn max_len(&self) -> usize {
        64
    }
    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }
    fn predict(&self, encoded: &EncodedInstance) -> Result<Vec<f64>> {
        let e = self.embed_ids(&encoded.token_ids);
        Ok(e.dot(&self.weights).sum_axis(ndarray::Axis(0)).to_vec())
    }
    fn as_differentiable(&self) -> Option<&dyn Differentiable> {
        Some(self)
    }
}

impl Differentiable for Linear {
    fn embedding_width(&self) -> usize {
        self.weights.nrows()
    }
    fn embed(&self, encoded: &EncodedInstance) -> Result<Matrix> {
        Ok(self.embed_ids(&encoded.token_ids))
    }
    fn record_forward(&self, tape: &mut Tape, embeddings: NodeId, encoded: &EncodedInstance) -> Result<NodeId> {
        let w = tape.leaf(self.weights.clone());
        let ones = tape.leaf(Array2::ones((1, encoded.len())));
        let mut x = embeddings;
        if self.with_max {
            let m = tape.row_max(x);
            x = tape.add(x, m);
        }
        let h = tape.matmul(x, w);
        Ok(tape.matmul(ones, h))
    }
}

/// Target-class output linear in which document tokens are kept:
/// `p = 0.5 + sum_i coef[i] * keep_i`.
pub struct KeepLinear {
    pub tokenizer: Tokenizer,
    pub coefficients: Vec<f64>,
}

impl Classifier for KeepLinear {
    fn label_count(&self) -> usize {
        2
    }
    fn max_len(&self) -> usize {
        64
    }
    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }
    fn predict(&self, encoded: &EncodedInstance) -> Result<Vec<f64>> {
        let mask = self.tokenizer.mask_id();
        let p: f64 = 0.5
            + encoded
                .document_positions()
                .zip(&self.coefficients)
                .map(|(pos, c)| if encoded.token_ids[pos] == mask { 0.0 } else { *c })
                .sum::<f64>();
        Ok(vec![p, 1.0 - p])
    }
}

/// Predicts class 0 with confidence 0.9 when the document region contains
/// the token `x`, else class 1 with 0.6.
pub struct CueVote {
    pub tokenizer: Tokenizer,
}

impl CueVote {
    pub fn new() -> Self {
        CueVote {
            tokenizer: Tokenizer::fit(["a b c x q"], 1),
        }
    }

    pub fn doc(sentences: &[&str]) -> DocumentInstance {
        DocumentInstance {
            doc_id: "cue".into(),
            sentences: sentences.iter().map(|s| s.to_string()).collect(),
            query: TaskQuery::key_feature("q"),
            label: 0,
            gold_evidence: None,
            split: Split::Test,
        }
    }
}

impl Classifier for CueVote {
    fn label_count(&self) -> usize {
        2
    }
    fn max_len(&self) -> usize {
        64
    }
    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }
    fn predict(&self, encoded: &EncodedInstance) -> Result<Vec<f64>> {
        let x = self.tokenizer.id("x").unwrap();
        let hit = encoded.document_positions().any(|p| encoded.token_ids[p] == x);
        Ok(if hit { vec![0.9, 0.1] } else { vec![0.4, 0.6] })
    }
}
