use std::path::PathBuf;

use evident::corpus::{
    dataset_stats, generate_synthetic_corpus, subsample_evidence_supervision, write_jsonl, DocumentInstance, Split,
    SyntheticConfig,
};
use serde::Serialize;

use crate::run;

#[derive(clap::Args)]
pub struct Args {
    /// TOML corpus config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output JSONL path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long)]
    n_labels: Option<usize>,
    #[arg(long)]
    spurious_rate: Option<f64>,
    #[arg(long)]
    cue_strength: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep gold evidence on this fraction of training instances.
    #[arg(long, default_value_t = 1.0)]
    evidence_fraction: f64,
}

#[derive(Serialize)]
struct Resolved {
    synthetic: SyntheticConfig,
    evidence_fraction: f64,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut cfg: SyntheticConfig = match &args.config {
        Some(path) => run::load_toml(path)?,
        None => SyntheticConfig::default(),
    };
    if let Some(v) = args.n_docs {
        cfg.n_docs = v;
    }
    if let Some(v) = args.n_labels {
        cfg.n_labels = v;
    }
    if let Some(v) = args.spurious_rate {
        cfg.spurious_correlation_rate = v;
    }
    if let Some(v) = args.cue_strength {
        cfg.cue_strength = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let mut docs = generate_synthetic_corpus(&cfg)?;
    if args.evidence_fraction != 1.0 {
        docs = subsample_evidence_supervision(docs, args.evidence_fraction, cfg.seed)?;
    }
    run::create_parent(&args.out)?;
    write_jsonl(&args.out, &docs)?;
    let fp = run::write_fingerprint(
        &args.out,
        "synth-data",
        &Resolved {
            synthetic: cfg.clone(),
            evidence_fraction: args.evidence_fraction,
        },
    )?;
    print_table(&docs, cfg.n_labels);
    println!(
        "wrote {} instances to {} (fingerprint {})",
        docs.len(),
        args.out.display(),
        &fp[..12]
    );
    Ok(())
}

pub(crate) fn print_table(docs: &[DocumentInstance], label_count: usize) {
    run::print_stats_header();
    for split in [Split::Train, Split::Val, Split::Test] {
        let part: Vec<DocumentInstance> = docs.iter().filter(|d| d.split == split).cloned().collect();
        if !part.is_empty() {
            run::print_stats(&split.to_string(), &dataset_stats(&part, label_count, None));
        }
    }
}
