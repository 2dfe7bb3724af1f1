use std::path::PathBuf;

use evident::corpus::{
    adapt_docred, dataset_stats, load_docred, subsample_evidence_supervision, write_jsonl, AdaptOptions, Split,
};
use log::info;
use serde::Serialize;

use crate::run;

#[derive(clap::Args)]
pub struct Args {
    /// DocRED JSON file (a list of documents).
    #[arg(long)]
    input: PathBuf,
    /// Output JSONL path; the label space is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Share of NA instances in the output.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    na_fraction: f64,
    /// Keep gold evidence on this fraction of training instances.
    #[arg(long, default_value_t = 1.0)]
    evidence_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split tag for the produced instances (train, val or test).
    #[arg(long, default_value = "train")]
    split: String,
    /// Reuse the label space from an earlier adaptation (its `.labels.json`).
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Serialize)]
struct Resolved {
    input_sha256: String,
    na_fraction: f64,
    evidence_fraction: f64,
    seed: u64,
    split: Split,
    labels: Option<Vec<String>>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let split: Split = args.split.parse()?;
    let raw = load_docred(&args.input)?;
    let mut opts = AdaptOptions::new(args.na_fraction, args.seed);
    opts.split = split;
    if let Some(path) = &args.labels {
        opts.labels = Some(run::read_json(path)?);
    }
    let adapted = adapt_docred(&raw, &opts)?;
    if adapted.skipped_for_na > 0 {
        info!(
            "{} documents had fewer than two entities and supplied no NA pairs",
            adapted.skipped_for_na
        );
    }
    let instances = subsample_evidence_supervision(adapted.instances, args.evidence_fraction, args.seed)?;

    run::create_parent(&args.out)?;
    write_jsonl(&args.out, &instances)?;
    run::write_json(&run::labels_path(&args.out), &adapted.labels)?;
    let fp = run::write_fingerprint(
        &args.out,
        "adapt-docred",
        &Resolved {
            input_sha256: run::file_digest(&args.input)?,
            na_fraction: args.na_fraction,
            evidence_fraction: args.evidence_fraction,
            seed: args.seed,
            split,
            labels: opts.labels.map(|l| l.names),
        },
    )?;
    let stats = dataset_stats(&instances, adapted.labels.len(), Some(0));
    run::print_stats_header();
    run::print_stats(&split.to_string(), &stats);
    println!(
        "wrote {} instances to {} (fingerprint {})",
        instances.len(),
        args.out.display(),
        &fp[..12]
    );
    Ok(())
}
