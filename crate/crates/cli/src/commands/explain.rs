use std::path::{Path, PathBuf};

use evident::attribution::{AttributionOptions, Method};
use evident::baselines::{PairScoring, Selector};
use evident::corpus::{write_jsonl, Split};
use evident::evaluation::{
    build_report, explain_baseline, explain_sufficient, highlight, lambda_sweep, sweep_csv, InstancePrediction,
    SWEEP_LAMBDAS,
};
use evident::model::CompactTransformer;
use evident::sufficiency::DEFAULT_LAMBDA;
use evident::Error;
use rayon::prelude::*;
use serde::Serialize;

use super::train::MODEL_FILE;
use crate::run;

#[derive(clap::Args)]
pub struct Args {
    /// Checkpoint file or run directory containing model.json.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus JSONL.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// input-gradient, integrated-gradients, deeplift or lime.
    #[arg(long, default_value = "deeplift")]
    method: String,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// `sufficient`, or a baseline: direct, fulldoc, ent, first2, first3, bestpair.
    #[arg(long, default_value = "sufficient")]
    selector: String,
    /// Score BestPair sentences by their own argmax class instead of the full-document class.
    #[arg(long)]
    own_argmax: bool,
    /// Predictions JSONL.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-sentence highlights for review.
    #[arg(long)]
    highlight: Option<PathBuf>,
    /// Write an evidence-quality-vs-lambda CSV instead of predictions.
    #[arg(long)]
    sweep: Option<PathBuf>,
    #[arg(long, default_value_t = evident::attribution::DEFAULT_IG_STEPS)]
    ig_steps: usize,
    #[arg(long, default_value_t = evident::attribution::DEFAULT_LIME_SAMPLES)]
    lime_samples: usize,
    /// LIME sampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Only the first N instances of the split.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Serialize)]
struct Resolved<'a> {
    checkpoint_sha256: String,
    data_sha256: String,
    split: Split,
    method: Method,
    selector: &'a str,
    pair_scoring: PairScoring,
    lambda: f64,
    lambdas: Option<&'a [f64]>,
    options: &'a AttributionOptions,
    limit: Option<usize>,
}

enum Choice {
    Sufficient,
    Baseline(Selector),
}

fn model_path(checkpoint: &Path) -> PathBuf {
    let p = run::resolve(checkpoint);
    if p.is_dir() {
        p.join(MODEL_FILE)
    } else {
        p
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let method: Method = args.method.parse()?;
    let choice = match args.selector.as_str() {
        "sufficient" => Choice::Sufficient,
        other => Choice::Baseline(other.parse()?),
    };
    let split: Split = args.split.parse()?;
    if args.out.is_none() && args.sweep.is_none() {
        return Err(Error::InvalidArgument("nothing to do: pass --out, --sweep or both".into()).into());
    }
    let path = model_path(&args.checkpoint);
    let model = CompactTransformer::load(&path)?;
    let mut instances = run::read_instances(&args.data, Some(split))?;
    if let Some(n) = args.limit {
        instances.truncate(n);
    }
    if instances.is_empty() {
        return Err(Error::Empty(format!("no {split} instances in {}", args.data.display())).into());
    }
    let options = AttributionOptions {
        ig_steps: args.ig_steps,
        lime_samples: args.lime_samples,
        lime_seed: args.seed,
    };
    let scoring = if args.own_argmax {
        PairScoring::OwnArgmax
    } else {
        PairScoring::FullPrediction
    };
    let resolved = Resolved {
        checkpoint_sha256: run::file_digest(&path)?,
        data_sha256: run::file_digest(&args.data)?,
        split,
        method,
        selector: &args.selector,
        pair_scoring: scoring,
        lambda: args.lambda,
        lambdas: args.sweep.as_ref().map(|_| &SWEEP_LAMBDAS[..]),
        options: &options,
        limit: args.limit,
    };

    if let Some(csv) = &args.sweep {
        let rows = lambda_sweep(&model, &instances, method, &options, &SWEEP_LAMBDAS)?;
        run::create_parent(csv)?;
        std::fs::write(csv, sweep_csv(&rows)).map_err(|e| Error::io(csv, e))?;
        run::write_fingerprint(csv, "explain", &resolved)?;
        println!(
            "{:>6} {:>8} {:>8} {:>8} {:>7}",
            "lambda", "ev-P", "ev-F1", "length", "acc"
        );
        for r in &rows {
            println!(
                "{:>6.2} {:>8.4} {:>8.4} {:>8.2} {:>7.4}",
                r.lambda, r.evidence_precision, r.evidence_f1, r.mean_evidence_length, r.label_accuracy
            );
        }
    }

    let Some(out) = &args.out else {
        return Ok(());
    };
    let predictions: Vec<InstancePrediction> = instances
        .par_iter()
        .map(|inst| match choice {
            Choice::Sufficient => explain_sufficient(&model, inst, method, &options, args.lambda).map(|e| e.prediction),
            Choice::Baseline(sel) => explain_baseline(&model, inst, sel, scoring),
        })
        .collect::<evident::Result<_>>()?;
    run::create_parent(out)?;
    write_jsonl(out, &predictions)?;
    run::write_fingerprint(out, "explain", &resolved)?;
    if let Some(h) = &args.highlight {
        let rows: Vec<_> = predictions
            .iter()
            .zip(&instances)
            .map(|(p, i)| highlight(p, i))
            .collect();
        run::create_parent(h)?;
        write_jsonl(h, &rows)?;
    }
    let report = build_report(&args.selector, &predictions, &instances, model.config().label_count)?;
    println!(
        "{} instances: accuracy {:.4}, evidence P {:.4} F1 {:.4}, mean length {:.2}, faithfulness {:.4}",
        report.instances,
        report.label_accuracy,
        report.evidence_precision,
        report.evidence_f1,
        report.mean_evidence_length,
        report.faithfulness_agreement
    );
    Ok(())
}
