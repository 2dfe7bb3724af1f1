//! Run plumbing shared by the commands: config files, fingerprints, data
//! loading and error rendering.

use std::path::{Path, PathBuf};

use anyhow::Context;
use evident::corpus::{read_jsonl, DatasetStats, DocumentInstance, LabelSpace, Split};
use evident::evaluation::{digest, fingerprint};
use evident::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Root for checkpoints and default outputs.
pub const HOME_ENV: &str = "EVIDENT_HOME";

pub fn home() -> PathBuf {
    std::env::var_os(HOME_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// `path` as given, or resolved under [`HOME_ENV`] when relative and absent.
pub fn resolve(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        let under = home().join(path);
        if under.exists() {
            return under;
        }
    }
    path.to_path_buf()
}

/// Single-line `error[<tag>]: <message>` for the outermost library error.
pub fn error_line(e: &anyhow::Error) -> String {
    let tag = e
        .chain()
        .find_map(|c| c.downcast_ref::<Error>())
        .map_or("cli", Error::tag);
    let msg = format!("{e:#}");
    format!("error[{tag}]: {}", msg.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// Parses a TOML file with schema validation. Errors name the offending field.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_toml(&text).with_context(|| format!("config {}", path.display()))
}

pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T, Error> {
    toml::from_str(text).map_err(|e| {
        let reason = e.message().to_string();
        let field = quoted_field(&reason)
            .or_else(|| e.span().and_then(|s| key_at(text, s.start)))
            .unwrap_or_else(|| "<root>".into());
        Error::Config { field, reason }
    })
}

fn quoted_field(msg: &str) -> Option<String> {
    ["unknown field `", "missing field `"].iter().find_map(|p| {
        let rest = &msg[msg.find(p)? + p.len()..];
        Some(rest[..rest.find('`')?].to_string())
    })
}

fn key_at(text: &str, offset: usize) -> Option<String> {
    let start = text[..offset.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next()?;
    let key = line.split('=').next()?.trim();
    (!key.is_empty() && !key.starts_with('[')).then(|| key.to_string())
}

#[derive(Serialize)]
struct FingerprintRecord<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    fingerprint: String,
    config: &'a T,
}

/// Writes `<output>.fingerprint.json` describing the config that produced
/// `output`, and returns the fingerprint.
pub fn write_fingerprint<T: Serialize>(output: &Path, command: &str, config: &T) -> anyhow::Result<String> {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".fingerprint.json");
    write_fingerprint_to(&output.with_file_name(name), command, config)
}

pub fn write_fingerprint_to<T: Serialize>(path: &Path, command: &str, config: &T) -> anyhow::Result<String> {
    let fp = fingerprint(config)?;
    let record = FingerprintRecord {
        command,
        version: env!("CARGO_PKG_VERSION"),
        fingerprint: fp.clone(),
        config,
    };
    write_json(path, &record)?;
    Ok(fp)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| path.display().to_string())?)
}

pub fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// SHA-256 of a file's bytes, so fingerprints pin the input data.
pub fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(digest(&bytes))
}

/// Label-space sidecar written next to adapted data.
pub fn labels_path(data: &Path) -> PathBuf {
    data.with_extension("labels.json")
}

pub fn read_labels(data: &Path) -> anyhow::Result<Option<LabelSpace>> {
    let path = labels_path(data);
    if path.exists() {
        Ok(Some(read_json(&path)?))
    } else {
        Ok(None)
    }
}

pub fn read_instances(path: &Path, split: Option<Split>) -> anyhow::Result<Vec<DocumentInstance>> {
    let all: Vec<DocumentInstance> = read_jsonl(path)?;
    Ok(match split {
        Some(s) => all.into_iter().filter(|i| i.split == s).collect(),
        None => all,
    })
}

/// Label count from the sidecar when present, else one past the largest label.
pub fn infer_label_count(data: &Path, instances: &[DocumentInstance]) -> anyhow::Result<usize> {
    Ok(match read_labels(data)? {
        Some(labels) => labels.len(),
        None => instances.iter().map(|i| i.label + 1).max().unwrap_or(0).max(2),
    })
}

pub fn print_stats_header() {
    println!(
        "{:<8} {:>9} {:>9} {:>10} {:>10} {:>6} {:>7} {:>9}",
        "split", "documents", "instances", "words/inst", "sents/inst", "labels", "NA%", "evidence"
    );
}

pub fn print_stats(name: &str, s: &DatasetStats) {
    println!(
        "{:<8} {:>9} {:>9} {:>10.1} {:>10.2} {:>6} {:>7.1} {:>9}",
        name,
        s.documents,
        s.instances,
        s.mean_words_per_instance,
        s.mean_sentences_per_instance,
        s.label_count,
        s.na_percent,
        s.with_evidence
    );
}
