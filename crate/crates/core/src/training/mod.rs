//! Cross-entropy training with optional attention regularization and
//! entropy maximization on evidence-removed documents.

mod config;
mod losses;
mod optim;
mod trainer;

pub use config::{Regularizers, TrainingConfig};
pub use losses::{
    evidence_positions, loss_attention_reg, loss_classification, loss_entropy_max, make_entropy_example,
    make_entropy_examples, record_attention, record_classification, record_entropy, EntropyExample,
};
pub use optim::{clip_global_norm, scheduled_lr, AdamW};
pub use trainer::{
    train, train_with, validation_metrics, BestSnapshot, EpochEnd, EpochRecord, TrainingOutcome, TrainingState,
    ValidationMetrics,
};
