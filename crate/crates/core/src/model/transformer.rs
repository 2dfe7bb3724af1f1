//! Compact pre-norm transformer encoder classifying from the `[CLS]` position.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::classifier::{Classifier, Differentiable};
use super::encoding::EncodedInstance;
use super::tape::{Linearization, Matrix, NodeId, Tape, UnaryFn};
use super::tokenizer::Tokenizer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadInit {
    /// Zero output weights and bias: untrained predictions are uniform.
    Zero,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub label_count: usize,
    pub max_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    #[serde(default = "default_head_init")]
    pub head_init: HeadInit,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default = "default_embedding_scale")]
    pub embedding_scale: f64,
}

fn default_head_init() -> HeadInit {
    HeadInit::Zero
}

fn default_embedding_scale() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn compact(label_count: usize, max_len: usize) -> Self {
        ModelConfig {
            label_count,
            max_len,
            d_model: 32,
            n_heads: 2,
            n_layers: 2,
            d_ff: 64,
            head_init: HeadInit::Zero,
            init_seed: 0,
            embedding_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::Config {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if self.label_count < 2 {
            return bad("label_count", "need at least two classes");
        }
        if self.max_len < 3 {
            return bad("max_len", "need room for [CLS], one query token and [SEP]");
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("n_heads", "d_model must be a positive multiple of n_heads");
        }
        if self.n_layers == 0 {
            return bad("n_layers", "need at least one layer");
        }
        if self.d_ff == 0 {
            return bad("d_ff", "must be positive");
        }
        Ok(())
    }
}

const LN_EPS: f64 = 1e-5;
const PER_LAYER: usize = 16;

// Offsets of per-layer parameters.
const LN1_G: usize = 0;
const LN1_B: usize = 1;
const WQ: usize = 2;
const BQ: usize = 3;
const WK: usize = 4;
const BK: usize = 5;
const WV: usize = 6;
const BV: usize = 7;
const WO: usize = 8;
const BO: usize = 9;
const LN2_G: usize = 10;
const LN2_B: usize = 11;
const W1: usize = 12;
const B1: usize = 13;
const W2: usize = 14;
const B2: usize = 15;

/// Node ids of one recorded forward pass.
#[derive(Debug, Clone)]
pub struct ForwardNodes {
    pub logits: NodeId,
    pub probs: NodeId,
    /// `1 × len` final-layer attention from position 0, averaged over heads.
    pub cls_attention: NodeId,
    /// One leaf per parameter, in [`CompactTransformer::param_names`] order.
    pub params: Vec<NodeId>,
}

pub enum ForwardInput<'a> {
    Tokens(&'a [u32]),
    Embeddings(NodeId),
}

#[derive(Debug, Clone)]
pub struct CompactTransformer {
    config: ModelConfig,
    tokenizer: Tokenizer,
    params: Vec<Arc<Matrix>>,
    names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct StoredParam {
    name: String,
    shape: (usize, usize),
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    format: String,
    config: ModelConfig,
    tokenizer: Tokenizer,
    params: Vec<StoredParam>,
}

const CHECKPOINT_FORMAT: &str = "evident-compact-transformer/1";

impl CompactTransformer {
    pub fn new(config: ModelConfig, tokenizer: Tokenizer) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let d = config.d_model;
        let mut params = Vec::new();
        let mut names = Vec::new();
        let mut add = |name: String, m: Matrix| {
            names.push(name);
            params.push(Arc::new(m));
        };
        let mut normal = |rows: usize, cols: usize, std: f64| -> Matrix {
            let dist = Normal::new(0.0, std).expect("finite std");
            Array2::from_shape_fn((rows, cols), |_| dist.sample(&mut rng))
        };
        add("tok_emb".into(), normal(tokenizer.len(), d, config.embedding_scale));
        add(
            "pos_emb".into(),
            normal(config.max_len, d, 0.1 * config.embedding_scale),
        );
        for l in 0..config.n_layers {
            let w = |rows: usize| 1.0 / (rows as f64).sqrt();
            let layer = [
                ("ln1_g", Array2::ones((1, d))),
                ("ln1_b", Array2::zeros((1, d))),
                ("wq", normal(d, d, w(d))),
                ("bq", Array2::zeros((1, d))),
                ("wk", normal(d, d, w(d))),
                ("bk", Array2::zeros((1, d))),
                ("wv", normal(d, d, w(d))),
                ("bv", Array2::zeros((1, d))),
                ("wo", normal(d, d, w(d))),
                ("bo", Array2::zeros((1, d))),
                ("ln2_g", Array2::ones((1, d))),
                ("ln2_b", Array2::zeros((1, d))),
                ("w1", normal(d, config.d_ff, w(d))),
                ("b1", Array2::zeros((1, config.d_ff))),
                ("w2", normal(config.d_ff, d, w(config.d_ff))),
                ("b2", Array2::zeros((1, d))),
            ];
            for (name, m) in layer {
                add(format!("layer{l}.{name}"), m);
            }
        }
        add("final_ln_g".into(), Array2::ones((1, d)));
        add("final_ln_b".into(), Array2::zeros((1, d)));
        let head = match config.head_init {
            HeadInit::Zero => Array2::zeros((d, config.label_count)),
            HeadInit::Random => normal(d, config.label_count, 1.0 / (d as f64).sqrt()),
        };
        add("w_out".into(), head);
        add("b_out".into(), Array2::zeros((1, config.label_count)));
        Ok(CompactTransformer {
            config,
            tokenizer,
            params,
            names,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Arc<Matrix>] {
        &self.params
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Replaces parameters in place; shapes must match.
    pub fn set_params(&mut self, params: Vec<Matrix>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                expected: format!("{} parameters", self.params.len()),
                actual: format!("{}", params.len()),
            });
        }
        for ((old, new), name) in self.params.iter().zip(&params).zip(&self.names) {
            if old.dim() != new.dim() {
                return Err(Error::Shape {
                    expected: format!("{name} {:?}", old.dim()),
                    actual: format!("{:?}", new.dim()),
                });
            }
        }
        self.params = params.into_iter().map(Arc::new).collect();
        Ok(())
    }

    fn layer(&self, l: usize, which: usize) -> usize {
        2 + l * PER_LAYER + which
    }

    fn check_len(&self, encoded: &EncodedInstance) -> Result<()> {
        if encoded.len() > self.config.max_len {
            return Err(Error::LengthOverflow {
                len: encoded.len(),
                max: self.config.max_len,
            });
        }
        if encoded.is_empty() {
            return Err(Error::Encoding("empty sequence".into()));
        }
        Ok(())
    }

    pub fn embed_ids(&self, ids: &[u32]) -> Matrix {
        let tok = &self.params[0];
        let pos = &self.params[1];
        Array2::from_shape_fn((ids.len(), self.config.d_model), |(i, j)| {
            tok[[ids[i] as usize, j]] + pos[[i, j]]
        })
    }

    fn layer_norm(tape: &mut Tape, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let c = tape.center_rows(x);
        let sq = tape.unary(c, UnaryFn::Square);
        let var = tape.row_mean(sq);
        let var = tape.add_scalar(var, LN_EPS);
        let inv = tape.unary(var, UnaryFn::Rsqrt);
        let normed = tape.mul_col(c, inv);
        let scaled = tape.mul_row(normed, gain);
        tape.add_row(scaled, bias)
    }

    /// Records the full forward pass on `tape`.
    pub fn record(&self, tape: &mut Tape, input: ForwardInput<'_>) -> ForwardNodes {
        let p: Vec<NodeId> = self.params.iter().map(|m| tape.leaf_shared(Arc::clone(m))).collect();
        let mut h = match input {
            ForwardInput::Embeddings(node) => node,
            ForwardInput::Tokens(ids) => {
                let rows: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
                let tok = tape.gather_rows(p[0], &rows);
                let pos = tape.slice_rows(p[1], 0, ids.len());
                tape.add(tok, pos)
            }
        };
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let mut cls_attention = None;
        for l in 0..self.config.n_layers {
            let at = |w: usize| p[self.layer(l, w)];
            let a = Self::layer_norm(tape, h, at(LN1_G), at(LN1_B));
            let q = tape.matmul(a, at(WQ));
            let q = tape.add_row(q, at(BQ));
            let k = tape.matmul(a, at(WK));
            let k = tape.add_row(k, at(BK));
            let v = tape.matmul(a, at(WV));
            let v = tape.add_row(v, at(BV));
            let mut outs = Vec::with_capacity(heads);
            let mut first_rows = Vec::with_capacity(heads);
            for hd in 0..heads {
                let (lo, hi) = (hd * dh, (hd + 1) * dh);
                let qh = tape.slice_cols(q, lo, hi);
                let kh = tape.slice_cols(k, lo, hi);
                let vh = tape.slice_cols(v, lo, hi);
                let scores = tape.matmul_t(qh, kh);
                let scores = tape.scale(scores, inv_sqrt);
                let att = tape.softmax_rows(scores);
                if l + 1 == self.config.n_layers {
                    first_rows.push(tape.slice_rows(att, 0, 1));
                }
                outs.push(tape.matmul(att, vh));
            }
            if !first_rows.is_empty() {
                let mut sum = first_rows[0];
                for &r in &first_rows[1..] {
                    sum = tape.add(sum, r);
                }
                cls_attention = Some(tape.scale(sum, 1.0 / heads as f64));
            }
            let joined = tape.concat_cols(&outs);
            let o = tape.matmul(joined, at(WO));
            let o = tape.add_row(o, at(BO));
            h = tape.add(h, o);
            let f = Self::layer_norm(tape, h, at(LN2_G), at(LN2_B));
            let f = tape.matmul(f, at(W1));
            let f = tape.add_row(f, at(B1));
            let f = tape.unary(f, UnaryFn::Gelu);
            let f = tape.matmul(f, at(W2));
            let f = tape.add_row(f, at(B2));
            h = tape.add(h, f);
        }
        let n = self.params.len();
        let h = Self::layer_norm(tape, h, p[n - 4], p[n - 3]);
        let cls = tape.slice_rows(h, 0, 1);
        let logits = tape.matmul(cls, p[n - 2]);
        let logits = tape.add_row(logits, p[n - 1]);
        let probs = tape.softmax_rows(logits);
        ForwardNodes {
            logits,
            probs,
            cls_attention: cls_attention.expect("at least one layer"),
            params: p,
        }
    }

    /// Final-layer attention weights from the `[CLS]` position over all positions.
    pub fn cls_attention(&self, encoded: &EncodedInstance) -> Result<Vec<f64>> {
        self.check_len(encoded)?;
        let mut tape = Tape::new();
        let nodes = self.record(&mut tape, ForwardInput::Tokens(&encoded.token_ids));
        Ok(tape.value(nodes.cls_attention).row(0).to_vec())
    }

    /// Gradient of `loss(tape, nodes)` with respect to every parameter.
    pub fn parameter_gradients<F>(&self, encoded: &EncodedInstance, loss: F) -> Result<(f64, Vec<Matrix>)>
    where
        F: FnOnce(&mut Tape, &ForwardNodes) -> Result<Option<NodeId>>,
    {
        self.check_len(encoded)?;
        let mut tape = Tape::new();
        let nodes = self.record(&mut tape, ForwardInput::Tokens(&encoded.token_ids));
        let Some(out) = loss(&mut tape, &nodes)? else {
            return Ok((0.0, self.params.iter().map(|p| Array2::zeros(p.raw_dim())).collect()));
        };
        let value = tape.scalar(out);
        let grads = tape.backward(out, Array2::ones((1, 1)), Linearization::Gradient)?;
        let per_param = nodes
            .params
            .iter()
            .zip(&self.params)
            .map(|(&id, p)| grads[id].clone().unwrap_or_else(|| Array2::zeros(p.raw_dim())))
            .collect();
        Ok((value, per_param))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let stored = StoredModel {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            tokenizer: self.tokenizer.clone(),
            params: self
                .names
                .iter()
                .zip(&self.params)
                .map(|(name, m)| StoredParam {
                    name: name.clone(),
                    shape: m.dim(),
                    data: m.iter().copied().collect(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&stored)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stored: StoredModel = serde_json::from_str(&text)?;
        if stored.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse(format!("unknown checkpoint format `{}`", stored.format)));
        }
        let mut model = CompactTransformer::new(stored.config, stored.tokenizer)?;
        if stored.params.len() != model.params.len() {
            return Err(Error::Parse("checkpoint parameter count mismatch".into()));
        }
        let mut params = Vec::with_capacity(stored.params.len());
        for (sp, name) in stored.params.into_iter().zip(&model.names) {
            if &sp.name != name {
                return Err(Error::Parse(format!("expected parameter {name}, found {}", sp.name)));
            }
            let m = Array2::from_shape_vec(sp.shape, sp.data).map_err(|e| Error::Parse(format!("{name}: {e}")))?;
            params.push(m);
        }
        model.set_params(params)?;
        Ok(model)
    }
}

impl Classifier for CompactTransformer {
    fn label_count(&self) -> usize {
        self.config.label_count
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    fn predict(&self, encoded: &EncodedInstance) -> Result<Vec<f64>> {
        self.check_len(encoded)?;
        let mut tape = Tape::new();
        let input = tape.leaf(self.embed_ids(&encoded.token_ids));
        let nodes = self.record(&mut tape, ForwardInput::Embeddings(input));
        Ok(tape.value(nodes.probs).row(0).to_vec())
    }

    fn as_differentiable(&self) -> Option<&dyn Differentiable> {
        Some(self)
    }
}

impl Differentiable for CompactTransformer {
    fn embedding_width(&self) -> usize {
        self.config.d_model
    }

    fn embed(&self, encoded: &EncodedInstance) -> Result<Matrix> {
        self.check_len(encoded)?;
        Ok(self.embed_ids(&encoded.token_ids))
    }

    fn record_forward(&self, tape: &mut Tape, embeddings: NodeId, encoded: &EncodedInstance) -> Result<NodeId> {
        self.check_len(encoded)?;
        let rows = tape.value(embeddings).nrows();
        if rows != encoded.len() {
            return Err(Error::Shape {
                expected: format!("{} rows", encoded.len()),
                actual: format!("{rows}"),
            });
        }
        Ok(self.record(tape, ForwardInput::Embeddings(embeddings)).probs)
    }
}
