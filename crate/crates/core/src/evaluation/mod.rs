//! Label and evidence metrics, attribution-mass analysis, significance
//! testing and run reports.

mod bootstrap;
mod mass;
mod metrics;
mod pipeline;
mod report;

pub use bootstrap::{paired_bootstrap, BootstrapResult, DEFAULT_RESAMPLES, SIGNIFICANCE_LEVEL};
pub use mass::{attribution_mass_on_token, attribution_mass_on_tokens, TokenMass};
pub use metrics::{evaluate_evidence, evaluate_labels, evidence_scores, EvidenceMetrics, LabelMetrics, SetScores};
pub use pipeline::{
    explain_baseline, explain_sufficient, lambda_sweep, sweep_csv, Explanation, SweepRow, SWEEP_LAMBDAS,
};
pub use report::{
    align, build_report, compare_systems, digest, fingerprint, highlight, per_instance_correct,
    per_instance_evidence_f1, EvalReport, HighlightedInstance, HighlightedSentence, InstancePrediction, Significance,
    REPORT_SCHEMA,
};
