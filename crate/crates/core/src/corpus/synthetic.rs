//! Synthetic evidence-grounded corpus: each document's label is fixed by one
//! or two cue sentences, while a distractor sentence may carry a token that
//! is correlated with the label only in the training split.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::{DocumentInstance, Split, TaskQuery};
use crate::error::{Error, Result};

const EXPLICIT: [&str; 8] = [
    "effect",
    "enhancement",
    "edema",
    "atrophy",
    "hemorrhage",
    "infarct",
    "lesion",
    "gliosis",
];

const IMPLICIT: [[&str; 3]; 8] = [
    ["downward displacement of the stem", "midline shift", "effaced sulci"],
    [
        "avid uptake of contrast",
        "bright rim after gadolinium",
        "blush on postcontrast sequences",
    ],
    [
        "surrounding vasogenic swelling",
        "fluid signal tracking through white matter",
        "tissue puffiness",
    ],
    ["widened sulcal spaces", "volume loss", "shrunken cortex"],
    ["blood products", "susceptibility blooming", "layering hematocrit level"],
    ["restricted diffusion", "vascular territory dropout", "cytotoxic change"],
    ["focal nodule", "rounded growth", "discrete focus"],
    ["scarring", "reactive flair brightening", "astrocytic scar"],
];

const SPURIOUS: [&str; 8] = [
    "sinus",
    "mastoid",
    "orbit",
    "scalp",
    "calvarium",
    "clivus",
    "sella",
    "vertex",
];

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ne", "tu", "ra", "vo", "si", "de", "pa", "zu", "fe"];

const LOCATIONS: [&str; 10] = [
    "frontal lobe",
    "temporal lobe",
    "parietal lobe",
    "occipital lobe",
    "cerebellum",
    "ventricles",
    "basal ganglia",
    "brainstem",
    "pons",
    "thalamus",
];

const DISTRACTORS: [&str; 8] = [
    "the {loc} appears unremarkable .",
    "no abnormality is seen in the {loc} .",
    "the {loc} is within normal limits .",
    "there is mild motion artifact near the {loc} .",
    "comparison is made with the prior study of the {loc} .",
    "the visualized {loc} is normal in size .",
    "flow voids near the {loc} are preserved .",
    "the {loc} demonstrates expected configuration .",
];

const EXPLICIT_TEMPLATES: [&str; 3] = [
    "there is {cue} in the {loc} .",
    "findings show {cue} involving the {loc} .",
    "{cue} is noted near the {loc} .",
];

const IMPLICIT_TEMPLATES: [&str; 2] = [
    "there is {cue} in the {loc} .",
    "images demonstrate {cue} near the {loc} .",
];

const SPURIOUS_TEMPLATE: &str = "incidental note is made of the {spur} near the {loc} .";

/// Cue vocabulary mapping phrases to labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticLexicon {
    explicit: Vec<String>,
    implicit: Vec<Vec<String>>,
    spurious: Vec<String>,
}

fn coined(label: usize, salt: usize) -> String {
    let a = SYLLABLES[(label + salt) % SYLLABLES.len()];
    let b = SYLLABLES[(label / SYLLABLES.len() + 3 * salt + 1) % SYLLABLES.len()];
    format!("{a}{b}{label}x{salt}")
}

impl SyntheticLexicon {
    pub fn new(n_labels: usize) -> Self {
        let mut explicit = Vec::with_capacity(n_labels);
        let mut implicit = Vec::with_capacity(n_labels);
        let mut spurious = Vec::with_capacity(n_labels);
        for label in 0..n_labels {
            if label < EXPLICIT.len() {
                explicit.push(EXPLICIT[label].to_string());
                implicit.push(IMPLICIT[label].iter().map(|s| s.to_string()).collect());
                spurious.push(SPURIOUS[label].to_string());
            } else {
                explicit.push(coined(label, 0));
                implicit.push((1..4).map(|salt| format!("{} change", coined(label, salt))).collect());
                spurious.push(coined(label, 7));
            }
        }
        SyntheticLexicon {
            explicit,
            implicit,
            spurious,
        }
    }

    pub fn n_labels(&self) -> usize {
        self.explicit.len()
    }

    /// The single-token keyword that names `label` outright.
    pub fn explicit_keyword(&self, label: usize) -> &str {
        &self.explicit[label]
    }

    pub fn implicit_phrases(&self, label: usize) -> &[String] {
        &self.implicit[label]
    }

    pub fn spurious_token(&self, label: usize) -> &str {
        &self.spurious[label]
    }

    /// Label whose cue (keyword or implicit phrase) occurs in `sentence`.
    pub fn label_of_sentence(&self, sentence: &str) -> Option<usize> {
        let padded = format!(" {sentence} ");
        (0..self.n_labels()).find(|&l| {
            padded.contains(&format!(" {} ", self.explicit[l]))
                || self.implicit[l].iter().any(|p| padded.contains(&format!(" {p} ")))
        })
    }

    /// Label whose spurious token occurs in `sentence`.
    pub fn spurious_label_of_sentence(&self, sentence: &str) -> Option<usize> {
        sentence
            .split_whitespace()
            .find_map(|w| self.spurious.iter().position(|s| s == w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_labels: usize,
    pub n_docs: usize,
    /// Inclusive range of sentences per document.
    pub sentences_per_doc: (usize, usize),
    /// Probability that a cue sentence uses the explicit keyword rather than an implicit phrase.
    #[serde(default = "default_cue_strength")]
    pub cue_strength: f64,
    pub spurious_correlation_rate: f64,
    pub seed: u64,
    #[serde(default = "default_eval_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_eval_fraction")]
    pub test_fraction: f64,
    /// Probability that a document gets a second cue sentence.
    #[serde(default = "default_second_cue")]
    pub second_cue_rate: f64,
    #[serde(default = "default_feature_name")]
    pub feature_name: String,
}

fn default_cue_strength() -> f64 {
    0.5
}
fn default_eval_fraction() -> f64 {
    0.2
}
fn default_second_cue() -> f64 {
    0.3
}
fn default_feature_name() -> String {
    "finding".into()
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_labels: 3,
            n_docs: 600,
            sentences_per_doc: (4, 8),
            cue_strength: default_cue_strength(),
            spurious_correlation_rate: 0.0,
            seed: 1,
            val_fraction: default_eval_fraction(),
            test_fraction: default_eval_fraction(),
            second_cue_rate: default_second_cue(),
            feature_name: default_feature_name(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::Config {
                field: field.into(),
                reason,
            })
        };
        if self.n_labels < 2 {
            return bad("n_labels", format!("{} < 2", self.n_labels));
        }
        let (lo, hi) = self.sentences_per_doc;
        if lo < 1 || lo > hi {
            return bad("sentences_per_doc", format!("invalid range ({lo}, {hi})"));
        }
        for (field, p) in [
            ("spurious_correlation_rate", self.spurious_correlation_rate),
            ("cue_strength", self.cue_strength),
            ("second_cue_rate", self.second_cue_rate),
            ("val_fraction", self.val_fraction),
            ("test_fraction", self.test_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(field, format!("{p} is not in [0, 1]"));
            }
        }
        if self.val_fraction + self.test_fraction > 1.0 {
            return bad("test_fraction", "val_fraction + test_fraction exceeds 1".into());
        }
        if self.feature_name.trim().is_empty() {
            return bad("feature_name", "empty".into());
        }
        Ok(())
    }

    pub fn lexicon(&self) -> SyntheticLexicon {
        SyntheticLexicon::new(self.n_labels)
    }

    fn split_of(&self, i: usize) -> Split {
        let n_test = (self.test_fraction * self.n_docs as f64).round() as usize;
        let n_val = (self.val_fraction * self.n_docs as f64).round() as usize;
        let n_train = self.n_docs.saturating_sub(n_test + n_val);
        if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

fn fill(template: &str, slot: &str, value: &str, loc: &str) -> String {
    template.replace(slot, value).replace("{loc}", loc)
}

pub fn generate_synthetic_corpus(config: &SyntheticConfig) -> Result<Vec<DocumentInstance>> {
    config.validate()?;
    let lex = config.lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.sentences_per_doc;
    let mut docs = Vec::with_capacity(config.n_docs);

    for i in 0..config.n_docs {
        let split = config.split_of(i);
        let label = rng.random_range(0..config.n_labels);
        let n = rng.random_range(lo..=hi);
        let n_cues = if n >= 2 && rng.random_bool(config.second_cue_rate) {
            2
        } else {
            1
        };
        let mut positions: Vec<usize> = (0..n).collect();
        positions.shuffle(&mut rng);
        let cues: BTreeSet<usize> = positions[..n_cues].iter().copied().collect();
        let spurious_at = positions.get(n_cues).copied();

        let mut sentences = Vec::with_capacity(n);
        for s in 0..n {
            let loc = *LOCATIONS.choose(&mut rng).expect("non-empty");
            let sentence = if cues.contains(&s) {
                if rng.random_bool(config.cue_strength) {
                    let t = EXPLICIT_TEMPLATES.choose(&mut rng).expect("non-empty");
                    fill(t, "{cue}", lex.explicit_keyword(label), loc)
                } else {
                    let t = IMPLICIT_TEMPLATES.choose(&mut rng).expect("non-empty");
                    let phrase = lex.implicit_phrases(label).choose(&mut rng).expect("non-empty");
                    fill(t, "{cue}", phrase, loc)
                }
            } else if Some(s) == spurious_at {
                let correlated = split != Split::Test && rng.random_bool(config.spurious_correlation_rate);
                let spur_label = if correlated {
                    label
                } else {
                    rng.random_range(0..config.n_labels)
                };
                fill(SPURIOUS_TEMPLATE, "{spur}", lex.spurious_token(spur_label), loc)
            } else {
                let t = DISTRACTORS.choose(&mut rng).expect("non-empty");
                fill(t, "{loc}", loc, loc)
            };
            sentences.push(sentence);
        }

        docs.push(DocumentInstance {
            doc_id: format!("synth-{i:05}"),
            sentences,
            query: TaskQuery::key_feature(config.feature_name.clone()),
            label,
            gold_evidence: Some(cues),
            split,
        });
    }
    Ok(docs)
}

/// Empirical mutual information (nats) between two discrete variables.
pub fn mutual_information(pairs: &[(usize, usize)]) -> f64 {
    use std::collections::HashMap;
    let n = pairs.len() as f64;
    if pairs.is_empty() {
        return 0.0;
    }
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut left: HashMap<usize, f64> = HashMap::new();
    let mut right: HashMap<usize, f64> = HashMap::new();
    for &(a, b) in pairs {
        *joint.entry((a, b)).or_default() += 1.0;
        *left.entry(a).or_default() += 1.0;
        *right.entry(b).or_default() += 1.0;
    }
    joint
        .iter()
        .map(|(&(a, b), &c)| {
            let p = c / n;
            p * (p / ((left[&a] / n) * (right[&b] / n))).ln()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spurious_pairs(docs: &[DocumentInstance], lex: &SyntheticLexicon, split: Split) -> Vec<(usize, usize)> {
        docs.iter()
            .filter(|d| d.split == split)
            .filter_map(|d| {
                d.sentences
                    .iter()
                    .find_map(|s| lex.spurious_label_of_sentence(s))
                    .map(|s| (s, d.label))
            })
            .collect()
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SyntheticConfig {
            n_labels: 3,
            n_docs: 600,
            seed: 1,
            ..Default::default()
        };
        let a = serde_json::to_string(&generate_synthetic_corpus(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_synthetic_corpus(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = generate_synthetic_corpus(&SyntheticConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a, serde_json::to_string(&other).unwrap());
    }

    #[test]
    fn cue_majority_reproduces_label() {
        let cfg = SyntheticConfig {
            n_labels: 5,
            n_docs: 300,
            spurious_correlation_rate: 0.9,
            ..Default::default()
        };
        let lex = cfg.lexicon();
        for doc in generate_synthetic_corpus(&cfg).unwrap() {
            doc.validate(cfg.n_labels).unwrap();
            let ev = doc.gold_evidence.as_ref().unwrap();
            assert!(!ev.is_empty() && ev.len() <= 2);
            let mut votes = vec![0usize; cfg.n_labels];
            for &i in ev {
                votes[lex.label_of_sentence(&doc.sentences[i]).unwrap()] += 1;
            }
            let majority = (0..cfg.n_labels)
                .max_by_key(|&l| (votes[l], std::cmp::Reverse(l)))
                .unwrap();
            assert_eq!(majority, doc.label);
            for (i, s) in doc.sentences.iter().enumerate() {
                if !ev.contains(&i) {
                    assert_eq!(lex.label_of_sentence(s), None, "{s}");
                }
            }
        }
    }

    #[test]
    fn no_confound_means_cues_alone_determine_test_labels() {
        let cfg = SyntheticConfig {
            spurious_correlation_rate: 0.0,
            ..Default::default()
        };
        let lex = cfg.lexicon();
        let docs = generate_synthetic_corpus(&cfg).unwrap();
        for doc in docs.iter().filter(|d| d.split == Split::Test) {
            let from_cues: BTreeSet<usize> = doc.sentences.iter().filter_map(|s| lex.label_of_sentence(s)).collect();
            assert_eq!(from_cues, BTreeSet::from([doc.label]));
        }
    }

    #[test]
    fn spurious_token_informative_only_in_train() {
        let cfg = SyntheticConfig {
            n_labels: 3,
            n_docs: 3000,
            spurious_correlation_rate: 0.9,
            ..Default::default()
        };
        let lex = cfg.lexicon();
        let docs = generate_synthetic_corpus(&cfg).unwrap();
        let train = mutual_information(&spurious_pairs(&docs, &lex, Split::Train));
        let test = mutual_information(&spurious_pairs(&docs, &lex, Split::Test));
        assert!(train > 0.5, "train MI {train}");
        assert!(test < 0.02, "test MI {test}");
    }

    #[test]
    fn mutual_information_of_independent_and_identical() {
        let ident: Vec<_> = (0..400).map(|i| (i % 4, i % 4)).collect();
        assert!((mutual_information(&ident) - 4f64.ln()).abs() < 1e-12);
        let indep: Vec<_> = (0..400).map(|i| (i % 4, (i / 4) % 2)).collect();
        assert!(mutual_information(&indep).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_names_field() {
        let cfg = SyntheticConfig {
            spurious_correlation_rate: 1.5,
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "spurious_correlation_rate"),
            other => panic!("{other:?}"),
        }
        assert!(SyntheticConfig {
            n_labels: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn coined_vocabulary_beyond_curated_labels() {
        let lex = SyntheticLexicon::new(12);
        let words: BTreeSet<&str> = (0..12).map(|l| lex.explicit_keyword(l)).collect();
        assert_eq!(words.len(), 12);
        assert_eq!(
            lex.label_of_sentence(&format!("there is {} here .", lex.explicit_keyword(10))),
            Some(10)
        );
    }
}
