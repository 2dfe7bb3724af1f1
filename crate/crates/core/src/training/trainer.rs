use std::collections::BTreeSet;

use log::{debug, info};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainingConfig;
use super::losses::{
    evidence_positions, loss_classification, make_entropy_example, record_attention, record_classification,
    record_entropy,
};
use super::optim::{clip_global_norm, scheduled_lr, AdamW};
use crate::corpus::DocumentInstance;
use crate::error::{Error, Result};
use crate::evaluation::evaluate_labels;
use crate::model::{argmax, Classifier, CompactTransformer, EncodedInstance, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Zero-based epoch index.
    pub epoch: usize,
    pub total_loss: f64,
    pub classification_loss: f64,
    /// Mean over instances whose evidence survived truncation.
    pub attention_loss: Option<f64>,
    /// Mean over reduced-document examples.
    pub entropy_loss: Option<f64>,
    /// Supervised instances whose evidence was truncated away.
    pub attention_skipped: usize,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: Option<f64>,
    /// Mean validation cross-entropy; breaks macro-F1 ties.
    pub val_loss: Option<f64>,
    pub improved: bool,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub val_macro_f1: Option<f64>,
    pub val_loss: Option<f64>,
    pub params: Vec<Matrix>,
}

/// Everything needed to continue training after an interruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub completed_epochs: usize,
    pub global_step: usize,
    pub optimizer: AdamW,
    pub params: Vec<Matrix>,
    pub history: Vec<EpochRecord>,
    pub best: Option<BestSnapshot>,
    pub epochs_since_best: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Passed to the per-epoch callback after validation.
pub struct EpochEnd<'a> {
    pub record: &'a EpochRecord,
    /// Parameters at the end of the epoch.
    pub model: &'a CompactTransformer,
    pub state: &'a TrainingState,
}

struct Prepared {
    encoded: EncodedInstance,
    label: usize,
    /// `Some` for evidence-supervised instances; empty when truncated away.
    evidence_positions: Option<Vec<usize>>,
    reduced: Option<EncodedInstance>,
}

#[derive(Default)]
struct ItemLosses {
    total: f64,
    classification: f64,
    attention: Option<f64>,
    attention_skipped: bool,
    entropy: Option<f64>,
}

fn prepare(
    model: &CompactTransformer,
    instances: &[DocumentInstance],
    config: &TrainingConfig,
) -> Result<Vec<Prepared>> {
    let regs = config.regularizers;
    instances
        .par_iter()
        .map(|inst| {
            inst.validate(model.label_count())?;
            let encoded = model.encode(inst)?;
            let evidence: Option<&BTreeSet<usize>> = inst.gold_evidence.as_ref().filter(|e| !e.is_empty());
            let evidence_positions = match evidence {
                Some(ev) if regs.attention() => Some(evidence_positions(&encoded, ev)),
                _ => None,
            };
            let reduced = match make_entropy_example(inst) {
                Some(ex) if regs.entropy() => Some(model.encode_subset(inst, &ex.kept)?),
                _ => None,
            };
            Ok(Prepared {
                encoded,
                label: inst.label,
                evidence_positions,
                reduced,
            })
        })
        .collect()
}

fn item_gradient(
    model: &CompactTransformer,
    item: &Prepared,
    config: &TrainingConfig,
) -> Result<(ItemLosses, Vec<Matrix>)> {
    let attn_weight = config.attention_weight;
    let mut losses = ItemLosses::default();
    let (total, mut grads) = model.parameter_gradients(&item.encoded, |tape, nodes| {
        let ce = record_classification(tape, nodes.logits, item.label);
        losses.classification = tape.scalar(ce);
        let mut total = ce;
        if attn_weight > 0.0 {
            if let Some(positions) = &item.evidence_positions {
                if positions.is_empty() {
                    losses.attention_skipped = true;
                } else {
                    let attn = record_attention(tape, nodes.cls_attention, positions);
                    losses.attention = Some(tape.scalar(attn));
                    let weighted = tape.scale(attn, attn_weight);
                    total = tape.add(total, weighted);
                }
            }
        }
        Ok(Some(total))
    })?;
    losses.total = total;
    let ent_weight = config.entropy_weight;
    if let (Some(reduced), true) = (&item.reduced, ent_weight > 0.0) {
        let (value, ent_grads) = model.parameter_gradients(reduced, |tape, nodes| {
            let ent = record_entropy(tape, nodes.logits);
            Ok(Some(tape.scale(ent, ent_weight)))
        })?;
        losses.entropy = Some(value / ent_weight);
        losses.total += value;
        for (g, e) in grads.iter_mut().zip(&ent_grads) {
            *g += e;
        }
    }
    Ok((losses, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub loss: f64,
}

impl ValidationMetrics {
    /// Higher macro-F1 wins; equal macro-F1 falls back to lower loss.
    pub fn better_than(&self, best_f1: f64, best_loss: f64) -> bool {
        self.macro_f1 > best_f1 || (self.macro_f1 == best_f1 && self.loss < best_loss)
    }
}

pub fn validation_metrics(
    model: &CompactTransformer,
    encoded: &[EncodedInstance],
    golds: &[usize],
) -> Result<ValidationMetrics> {
    let probs = model.predict_many(encoded)?;
    let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let m = evaluate_labels(&preds, golds, model.label_count())?;
    let loss = probs
        .iter()
        .zip(golds)
        .map(|(p, &g)| loss_classification(p, g))
        .sum::<f64>()
        / golds.len() as f64;
    Ok(ValidationMetrics {
        accuracy: m.accuracy,
        macro_f1: m.macro_f1,
        loss,
    })
}

fn check_supervision(prepared: &[Prepared], config: &TrainingConfig) -> Result<()> {
    let regs = config.regularizers;
    if regs.attention() && !prepared.iter().any(|p| p.evidence_positions.is_some()) {
        return Err(Error::Config {
            field: "regularizers".into(),
            reason: "attention regularization requested but no training instance has gold evidence".into(),
        });
    }
    if regs.entropy() && !prepared.iter().any(|p| p.reduced.is_some()) {
        return Err(Error::Config {
            field: "regularizers".into(),
            reason: "entropy maximization requested but no training instance has evidence leaving a reduced document"
                .into(),
        });
    }
    Ok(())
}

pub fn train(
    model: &mut CompactTransformer,
    train: &[DocumentInstance],
    val: &[DocumentInstance],
    config: &TrainingConfig,
) -> Result<TrainingOutcome> {
    train_with(model, train, val, config, None, |_| Ok(()))
}

/// Trains `model` in place and leaves it at the best validation epoch (or the
/// last epoch when `val` is empty). `resume` continues from a saved state.
pub fn train_with<F>(
    model: &mut CompactTransformer,
    train: &[DocumentInstance],
    val: &[DocumentInstance],
    config: &TrainingConfig,
    resume: Option<TrainingState>,
    mut on_epoch: F,
) -> Result<TrainingOutcome>
where
    F: FnMut(&EpochEnd<'_>) -> Result<()>,
{
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    let prepared = prepare(model, train, config)?;
    check_supervision(&prepared, config)?;
    let val_encoded: Vec<EncodedInstance> = val.par_iter().map(|i| model.encode(i)).collect::<Result<_>>()?;
    let val_golds: Vec<usize> = val.iter().map(|i| i.label).collect();

    let batch_size = config.effective_batch_size();
    let steps_per_epoch = prepared.len().div_ceil(batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let warmup = (config.warmup_fraction * total_steps as f64).ceil() as usize;

    let mut state = match resume {
        Some(s) => {
            model.set_params(s.params.clone())?;
            if s.optimizer.n_params() != model.params().len() {
                return Err(Error::Shape {
                    expected: format!("optimizer state for {} parameters", model.params().len()),
                    actual: format!("{}", s.optimizer.n_params()),
                });
            }
            s
        }
        None => TrainingState {
            completed_epochs: 0,
            global_step: 0,
            optimizer: AdamW::new(model.params().iter().map(|p| p.dim())),
            params: model.params().iter().map(|p| p.as_ref().clone()).collect(),
            history: Vec::new(),
            best: None,
            epochs_since_best: 0,
            stopped_early: false,
        },
    };

    while state.completed_epochs < config.epochs && !state.stopped_early {
        let epoch = state.completed_epochs;
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let mut sums = ItemLosses::default();
        let (mut attn_sum, mut attn_n, mut ent_sum, mut ent_n, mut skipped) = (0.0, 0usize, 0.0, 0usize, 0usize);
        let mut lr = 0.0;
        for batch in order.chunks(batch_size) {
            let results: Vec<Result<(ItemLosses, Vec<Matrix>)>> = batch
                .par_iter()
                .map(|&i| item_gradient(model, &prepared[i], config))
                .collect();
            let mut grads: Vec<Matrix> = model.params().iter().map(|p| Array2::zeros(p.raw_dim())).collect();
            for r in results {
                let (losses, g) = r?;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    *acc += gi;
                }
                sums.total += losses.total;
                sums.classification += losses.classification;
                if let Some(a) = losses.attention {
                    attn_sum += a;
                    attn_n += 1;
                }
                if let Some(e) = losses.entropy {
                    ent_sum += e;
                    ent_n += 1;
                }
                skipped += losses.attention_skipped as usize;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.mapv_inplace(|x| x * scale);
            }
            if let Some(max) = config.max_grad_norm {
                clip_global_norm(&mut grads, max);
            }
            lr = scheduled_lr(config.learning_rate, state.global_step, warmup, total_steps);
            state
                .optimizer
                .update(&mut state.params, &grads, lr, config.weight_decay);
            model.set_params(state.params.clone())?;
            state.global_step += 1;
        }

        let n = prepared.len() as f64;
        let val = if val_encoded.is_empty() {
            None
        } else {
            Some(validation_metrics(model, &val_encoded, &val_golds)?)
        };
        let improved = match (&state.best, &val) {
            (None, _) | (_, None) => true,
            (Some(best), Some(v)) => v.better_than(
                best.val_macro_f1.unwrap_or(f64::NEG_INFINITY),
                best.val_loss.unwrap_or(f64::INFINITY),
            ),
        };
        if improved {
            state.best = Some(BestSnapshot {
                epoch,
                val_macro_f1: val.map(|v| v.macro_f1),
                val_loss: val.map(|v| v.loss),
                params: state.params.clone(),
            });
            state.epochs_since_best = 0;
        } else {
            state.epochs_since_best += 1;
        }
        let record = EpochRecord {
            epoch,
            total_loss: sums.total / n,
            classification_loss: sums.classification / n,
            attention_loss: (attn_n > 0).then(|| attn_sum / attn_n as f64),
            entropy_loss: (ent_n > 0).then(|| ent_sum / ent_n as f64),
            attention_skipped: skipped,
            val_accuracy: val.map(|v| v.accuracy),
            val_macro_f1: val.map(|v| v.macro_f1),
            val_loss: val.map(|v| v.loss),
            improved,
            learning_rate: lr,
        };
        info!(
            "epoch {epoch}: loss {:.4} (ce {:.4}) val macro-F1 {}",
            record.total_loss,
            record.classification_loss,
            val.map_or("-".into(), |v| format!("{:.4}", v.macro_f1))
        );
        if skipped > 0 {
            debug!("epoch {epoch}: {skipped} instances had their evidence truncated away");
        }
        state.history.push(record);
        state.completed_epochs += 1;
        if state.epochs_since_best >= config.patience && val.is_some() {
            state.stopped_early = true;
        }
        on_epoch(&EpochEnd {
            record: state.history.last().expect("just pushed"),
            model,
            state: &state,
        })?;
    }

    if let Some(best) = &state.best {
        model.set_params(best.params.clone())?;
    }
    Ok(TrainingOutcome {
        history: state.history,
        best_epoch: state.best.map(|b| b.epoch),
        stopped_early: state.stopped_early,
    })
}
