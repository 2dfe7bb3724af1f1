use std::path::{Path, PathBuf};

use anyhow::Context;
use evident::corpus::{QueryKind, Split};
use evident::model::{CompactTransformer, HeadInit, ModelConfig, Tokenizer, DOCRED_MAX_LEN};
use evident::training::{train_with, Regularizers, TrainingConfig, TrainingState};
use evident::Error;
use serde::{Deserialize, Serialize};

use crate::run;

pub const MODEL_FILE: &str = "model.json";
pub const STATE_FILE: &str = "state.json";
pub const HISTORY_FILE: &str = "history.json";
pub const CONFIG_FILE: &str = "config.json";
pub const FINGERPRINT_FILE: &str = "fingerprint.json";

/// Sequence cap for key-feature data when the config does not set one;
/// entity-pair (DocRED) data defaults to [`DOCRED_MAX_LEN`].
const DEFAULT_MAX_LEN: usize = 128;

#[derive(clap::Args)]
pub struct Args {
    /// Corpus JSONL with train and val splits.
    #[arg(long)]
    data: PathBuf,
    /// TOML with optional [model], [training] and [tokenizer] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; each regularizer variant gets its own subdirectory.
    /// Defaults to `$EVIDENT_HOME/<data stem>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// none, attn, entropy or both.
    #[arg(long)]
    regularizers: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    attention_weight: Option<f64>,
    #[arg(long)]
    entropy_weight: Option<f64>,
    /// Continue an interrupted run; refused when the config differs.
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    model: ModelSection,
    training: TrainingConfig,
    tokenizer: TokenizerSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelSection {
    label_count: Option<usize>,
    max_len: Option<usize>,
    d_model: Option<usize>,
    n_heads: Option<usize>,
    n_layers: Option<usize>,
    d_ff: Option<usize>,
    head_init: Option<HeadInit>,
    init_seed: Option<u64>,
    embedding_scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TokenizerSection {
    min_count: usize,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection { min_count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub min_count: usize,
    pub data_sha256: String,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let file: TrainFile = match &args.config {
        Some(path) => run::load_toml(path)?,
        None => TrainFile::default(),
    };
    let all = run::read_instances(&args.data, None)?;
    let train: Vec<_> = all.iter().filter(|i| i.split == Split::Train).cloned().collect();
    let val: Vec<_> = all.iter().filter(|i| i.split == Split::Val).cloned().collect();

    let mut training = file.training;
    if let Some(r) = &args.regularizers {
        training.regularizers = r.parse::<Regularizers>()?;
    }
    if let Some(v) = args.epochs {
        training.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        training.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        training.batch_size = Some(v);
    }
    if let Some(v) = args.seed {
        training.seed = v;
    }
    if let Some(v) = args.attention_weight {
        training.attention_weight = v;
    }
    if let Some(v) = args.entropy_weight {
        training.entropy_weight = v;
    }
    training.batch_size = Some(training.effective_batch_size());
    training.validate()?;

    let label_count = match file.model.label_count {
        Some(n) => n,
        None => run::infer_label_count(&args.data, &all)?,
    };
    let m = &file.model;
    let default_len = if all.iter().any(|i| i.query.kind == QueryKind::EntityPair) {
        DOCRED_MAX_LEN
    } else {
        DEFAULT_MAX_LEN
    };
    let mut model_cfg = ModelConfig::compact(label_count, m.max_len.unwrap_or(default_len));
    model_cfg.d_model = m.d_model.unwrap_or(model_cfg.d_model);
    model_cfg.n_heads = m.n_heads.unwrap_or(model_cfg.n_heads);
    model_cfg.n_layers = m.n_layers.unwrap_or(model_cfg.n_layers);
    model_cfg.d_ff = m.d_ff.unwrap_or(model_cfg.d_ff);
    model_cfg.head_init = m.head_init.unwrap_or(model_cfg.head_init);
    model_cfg.init_seed = m.init_seed.unwrap_or(training.seed);
    model_cfg.embedding_scale = m.embedding_scale.unwrap_or(model_cfg.embedding_scale);
    model_cfg.validate()?;

    let resolved = Resolved {
        model: model_cfg,
        training,
        min_count: file.tokenizer.min_count,
        data_sha256: run::file_digest(&args.data)?,
    };
    let root = args
        .out
        .clone()
        .unwrap_or_else(|| run::home().join(args.data.file_stem().unwrap_or_default()));
    let dir = root.join(resolved.training.regularizers.name());
    train_variant(&dir, &resolved, &train, &val, args.resume)
}

fn train_variant(
    dir: &Path,
    resolved: &Resolved,
    train: &[evident::corpus::DocumentInstance],
    val: &[evident::corpus::DocumentInstance],
    resume: bool,
) -> anyhow::Result<()> {
    let fingerprint = evident::evaluation::fingerprint(resolved)?;
    let state_path = dir.join(STATE_FILE);
    let resume_state: Option<TrainingState> = if resume {
        let stored: serde_json::Value = run::read_json(&dir.join(FINGERPRINT_FILE))
            .with_context(|| format!("nothing to resume in {}", dir.display()))?;
        let previous = stored["fingerprint"].as_str().unwrap_or_default();
        if previous != fingerprint {
            return Err(Error::Config {
                field: "resume".into(),
                reason: format!(
                    "config fingerprint {} differs from the run in {} ({}); start a new run instead",
                    &fingerprint[..12],
                    dir.display(),
                    previous.get(..12).unwrap_or(previous)
                ),
            }
            .into());
        }
        Some(run::read_json(&state_path)?)
    } else {
        if state_path.exists() {
            return Err(Error::InvalidArgument(format!(
                "{} already holds a run; pass --resume or choose another --out",
                dir.display()
            ))
            .into());
        }
        None
    };

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    run::write_json(&dir.join(CONFIG_FILE), resolved)?;
    run::write_fingerprint_to(&dir.join(FINGERPRINT_FILE), "train", resolved)?;

    let tokenizer = Tokenizer::fit_instances(train, resolved.min_count);
    let mut model = CompactTransformer::new(resolved.model.clone(), tokenizer)?;
    let outcome = train_with(&mut model, train, val, &resolved.training, resume_state, |end| {
        if end.record.improved || end.state.best.is_none() {
            end.model.save(dir.join(MODEL_FILE))?;
        }
        std::fs::write(
            dir.join(HISTORY_FILE),
            serde_json::to_string_pretty(&end.state.history)?,
        )
        .map_err(|e| Error::io(dir.join(HISTORY_FILE), e))?;
        std::fs::write(&state_path, serde_json::to_string(end.state)?).map_err(|e| Error::io(&state_path, e))?;
        Ok(())
    })?;
    model.save(dir.join(MODEL_FILE))?;

    println!(
        "{}: {} epochs, best epoch {}, {}; checkpoint {}",
        resolved.training.regularizers,
        outcome.history.len(),
        outcome.best_epoch.map_or("-".into(), |e| e.to_string()),
        if outcome.stopped_early {
            "stopped early"
        } else {
            "ran to completion"
        },
        dir.join(MODEL_FILE).display()
    );
    Ok(())
}
