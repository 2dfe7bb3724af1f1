use std::path::PathBuf;

use evident::corpus::{read_jsonl, Split};
use evident::evaluation::{build_report, compare_systems, fingerprint, EvalReport, InstancePrediction, REPORT_SCHEMA};
use evident::Error;
use serde::Serialize;

use crate::run;

#[derive(clap::Args)]
pub struct Args {
    /// A prediction file as NAME=PATH; repeat for each system.
    #[arg(long = "system", value_name = "NAME=PATH", required = true)]
    systems: Vec<String>,
    /// Gold corpus JSONL.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Defaults to the gold label sidecar, else one past the largest label seen.
    #[arg(long)]
    label_count: Option<usize>,
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Bootstrap seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
struct Resolved<'a> {
    systems: Vec<(&'a str, String)>,
    gold_sha256: String,
    split: Split,
    label_count: usize,
    seed: u64,
}

#[derive(Serialize)]
struct Run {
    schema: &'static str,
    config_fingerprint: String,
    reports: Vec<EvalReport>,
}

fn parse_system(spec: &str) -> Result<(&str, PathBuf), Error> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name, PathBuf::from(path))),
        _ => Err(Error::InvalidArgument(format!("system `{spec}` is not NAME=PATH"))),
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let split: Split = args.split.parse()?;
    let gold = run::read_instances(&args.gold, Some(split))?;
    let mut systems: Vec<(&str, PathBuf, Vec<InstancePrediction>)> = Vec::new();
    for spec in &args.systems {
        let (name, path) = parse_system(spec)?;
        if systems.iter().any(|(n, _, _)| *n == name) {
            return Err(Error::InvalidArgument(format!("system name `{name}` given twice")).into());
        }
        let preds = read_jsonl(&path)?;
        systems.push((name, path, preds));
    }
    let label_count = match args.label_count {
        Some(n) => n,
        None => {
            let seen = systems
                .iter()
                .flat_map(|(_, _, p)| {
                    p.iter()
                        .map(|x| x.prediction.max(x.reduced_prediction.unwrap_or(0)) + 1)
                })
                .max()
                .unwrap_or(0);
            run::infer_label_count(&args.gold, &gold)?.max(seen)
        }
    };
    let mut digests = Vec::new();
    for (name, path, _) in &systems {
        digests.push((*name, run::file_digest(path)?));
    }
    let resolved = Resolved {
        systems: digests,
        gold_sha256: run::file_digest(&args.gold)?,
        split,
        label_count,
        seed: args.seed,
    };
    let fp = fingerprint(&resolved)?;

    let mut reports = Vec::new();
    for (name, _, preds) in &systems {
        let mut report = build_report(name, preds, &gold, label_count)?;
        report.config_fingerprint = Some(fp.clone());
        for (base, _, base_preds) in systems.iter().filter(|(n, _, _)| n != name) {
            for s in compare_systems((base, base_preds), (name, preds), &gold, args.seed)? {
                report
                    .significance
                    .insert(format!("{}>{}:{}", s.candidate, s.baseline, s.metric), s);
            }
        }
        reports.push(report);
    }

    run::create_parent(&args.out)?;
    run::write_json(
        &args.out,
        &Run {
            schema: REPORT_SCHEMA,
            config_fingerprint: fp,
            reports: reports.clone(),
        },
    )?;
    run::write_fingerprint(&args.out, "evaluate", &resolved)?;

    println!(
        "{:<14} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>7}",
        "system", "n", "acc", "macroF1", "ev-P", "ev-F1", "length", "faith"
    );
    for r in &reports {
        println!(
            "{:<14} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.2} {:>7.4}",
            r.system,
            r.instances,
            r.label_accuracy,
            r.label_macro_f1,
            r.evidence_precision,
            r.evidence_f1,
            r.mean_evidence_length,
            r.faithfulness_agreement
        );
    }
    for r in &reports {
        for (key, s) in &r.significance {
            if s.significant {
                println!("{key}: p = {:.4}", s.p_value);
            }
        }
    }
    Ok(())
}
