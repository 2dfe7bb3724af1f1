use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dataset partition an instance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "dev" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryKind {
    EntityPair,
    KeyFeature,
}

/// An entity named by a query, with the sentences it is mentioned in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRef {
    pub name: String,
    pub sentences: BTreeSet<usize>,
}

/// The task `t` attached to a document: either an entity pair or a named key feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskQuery {
    pub kind: QueryKind,
    #[serde(default)]
    pub head: Option<EntityRef>,
    #[serde(default)]
    pub tail: Option<EntityRef>,
    #[serde(default)]
    pub feature_name: Option<String>,
}

impl TaskQuery {
    pub fn entity_pair(head: EntityRef, tail: EntityRef) -> Self {
        TaskQuery {
            kind: QueryKind::EntityPair,
            head: Some(head),
            tail: Some(tail),
            feature_name: None,
        }
    }

    pub fn key_feature(name: impl Into<String>) -> Self {
        TaskQuery {
            kind: QueryKind::KeyFeature,
            head: None,
            tail: None,
            feature_name: Some(name.into()),
        }
    }

    /// Text segments of the query prefix; entity pairs yield two segments.
    pub fn segments(&self) -> Vec<&str> {
        match self.kind {
            QueryKind::EntityPair => [&self.head, &self.tail]
                .into_iter()
                .flatten()
                .map(|e| e.name.as_str())
                .collect(),
            QueryKind::KeyFeature => self.feature_name.iter().map(String::as_str).collect(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match self.kind {
            QueryKind::EntityPair => {
                if self.head.is_none() || self.tail.is_none() {
                    return Err("entity-pair query needs both head and tail".into());
                }
                if self.feature_name.is_some() {
                    return Err("entity-pair query must not carry a feature name".into());
                }
            }
            QueryKind::KeyFeature => {
                if self.feature_name.is_none() {
                    return Err("key-feature query needs a feature name".into());
                }
                if self.head.is_some() || self.tail.is_some() {
                    return Err("key-feature query must not carry entities".into());
                }
            }
        }
        Ok(())
    }
}

/// One (document, task, label, optional gold evidence) example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentInstance {
    pub doc_id: String,
    pub sentences: Vec<String>,
    pub query: TaskQuery,
    pub label: usize,
    #[serde(rename = "evidence", default, skip_serializing_if = "Option::is_none")]
    pub gold_evidence: Option<BTreeSet<usize>>,
    pub split: Split,
}

impl DocumentInstance {
    pub fn n_sentences(&self) -> usize {
        self.sentences.len()
    }

    /// True when gold evidence is present and non-empty.
    pub fn has_evidence(&self) -> bool {
        self.gold_evidence.as_ref().is_some_and(|e| !e.is_empty())
    }

    pub fn validate(&self, label_count: usize) -> Result<()> {
        let fail = |reason: String| Error::InvalidInstance {
            doc_id: self.doc_id.clone(),
            reason,
        };
        if self.sentences.is_empty() {
            return Err(fail("document has no sentences".into()));
        }
        if let Some(i) = self.sentences.iter().position(|s| s.trim().is_empty()) {
            return Err(fail(format!("sentence {i} is empty")));
        }
        if self.label >= label_count {
            return Err(fail(format!(
                "label {} outside label space of size {label_count}",
                self.label
            )));
        }
        if let Some(ev) = &self.gold_evidence {
            if let Some(&bad) = ev.iter().find(|&&i| i >= self.sentences.len()) {
                return Err(fail(format!(
                    "evidence index {bad} out of range for {} sentences",
                    self.sentences.len()
                )));
            }
        }
        self.query.validate().map_err(fail)
    }
}
