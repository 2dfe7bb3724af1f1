//! Datasets: DocRED adaptation, evidence-supervision subsampling and the
//! synthetic evidence-grounded corpus.

mod docred;
mod jsonl;
mod supervision;
mod synthetic;
mod types;

pub use docred::{
    adapt_docred, dataset_stats, load_docred, parse_docred, AdaptOptions, AdaptedDataset, DatasetStats, LabelSpace,
    RawDocument, RawFact, RawMention, NA_LABEL,
};
pub use jsonl::{read_jsonl, to_jsonl_string, write_jsonl};
pub use supervision::subsample_evidence_supervision;
pub use synthetic::{generate_synthetic_corpus, mutual_information, SyntheticConfig, SyntheticLexicon};
pub use types::{DocumentInstance, EntityRef, QueryKind, Split, TaskQuery};
