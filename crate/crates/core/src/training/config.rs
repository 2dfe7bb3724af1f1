use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which auxiliary objectives are active. Names match the run directories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizers {
    None,
    Attn,
    Entropy,
    Both,
}

impl Regularizers {
    pub const ALL: [Regularizers; 4] = [
        Regularizers::None,
        Regularizers::Attn,
        Regularizers::Entropy,
        Regularizers::Both,
    ];

    pub fn attention(self) -> bool {
        matches!(self, Regularizers::Attn | Regularizers::Both)
    }

    pub fn entropy(self) -> bool {
        matches!(self, Regularizers::Entropy | Regularizers::Both)
    }

    pub fn name(self) -> &'static str {
        match self {
            Regularizers::None => "none",
            Regularizers::Attn => "attn",
            Regularizers::Entropy => "entropy",
            Regularizers::Both => "both",
        }
    }
}

impl fmt::Display for Regularizers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regularizers {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regularizers::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config {
                field: "regularizers".into(),
                reason: format!("unknown variant `{s}` (expected none, attn, entropy or both)"),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    /// Peak learning rate of the linear warmup/decay schedule.
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    /// Defaults to 16 with both regularizers and 8 otherwise.
    pub batch_size: Option<usize>,
    pub regularizers: Regularizers,
    pub attention_weight: f64,
    pub entropy_weight: f64,
    pub seed: u64,
    /// Epochs without a validation macro-F1 improvement before stopping.
    pub patience: usize,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 15,
            learning_rate: 1e-5,
            warmup_fraction: 0.1,
            batch_size: None,
            regularizers: Regularizers::None,
            attention_weight: 1.0,
            entropy_weight: 1.0,
            seed: 0,
            patience: 3,
            weight_decay: 0.01,
            max_grad_norm: Some(1.0),
        }
    }
}

impl TrainingConfig {
    pub fn with_regularizers(regularizers: Regularizers) -> Self {
        TrainingConfig {
            regularizers,
            ..TrainingConfig::default()
        }
    }

    pub fn effective_batch_size(&self) -> usize {
        self.batch_size
            .unwrap_or(if self.regularizers == Regularizers::Both { 16 } else { 8 })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::Config {
                field: field.into(),
                reason,
            })
        };
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(
                "learning_rate",
                format!("{} is not a positive number", self.learning_rate),
            );
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction", format!("{} is not in [0, 1)", self.warmup_fraction));
        }
        if self.batch_size == Some(0) {
            return bad("batch_size", "must be at least 1".into());
        }
        for (field, w) in [
            ("attention_weight", self.attention_weight),
            ("entropy_weight", self.entropy_weight),
            ("weight_decay", self.weight_decay),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(field, format!("{w} is negative or not finite"));
            }
        }
        if let Some(c) = self.max_grad_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad("max_grad_norm", format!("{c} is not a positive number"));
            }
        }
        Ok(())
    }
}
