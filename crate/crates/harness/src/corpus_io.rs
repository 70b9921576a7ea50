//! Loading corpora from disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use multistrat_core::corpus::{ingest_esconv, Corpus, CorpusError, Split, SplitSpec};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Corpus { path: PathBuf, source: CorpusError },
    #[error("invalid split spec {0:?} (expected proportional, field, train, validation, test, contiguous:T,V or manifest:PATH)")]
    SplitSpec(String),
    #[error("{path}: split manifest must be an object mapping dialogue ids to split names: {message}")]
    Manifest { path: PathBuf, message: String },
}

pub fn read_text(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a split spec as given on the command line.
pub fn parse_split_spec(spec: &str) -> Result<SplitSpec, LoadError> {
    let bad = || LoadError::SplitSpec(spec.to_string());
    if let Some(rest) = spec.strip_prefix("contiguous:") {
        let (t, v) = rest.split_once(',').ok_or_else(bad)?;
        return Ok(SplitSpec::Contiguous {
            train: t.trim().parse().map_err(|_| bad())?,
            validation: v.trim().parse().map_err(|_| bad())?,
        });
    }
    if let Some(path) = spec.strip_prefix("manifest:") {
        let path = PathBuf::from(path);
        let text = read_text(&path)?;
        let raw: BTreeMap<String, String> = serde_json::from_str(&text).map_err(|e| LoadError::Manifest {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let mut map = BTreeMap::new();
        for (id, split) in raw {
            let split = Split::parse(&split).ok_or_else(|| LoadError::Manifest {
                path: path.clone(),
                message: format!("unknown split {split:?} for {id:?}"),
            })?;
            map.insert(id, split);
        }
        return Ok(SplitSpec::Manifest(map));
    }
    match spec {
        "proportional" => Ok(SplitSpec::Proportional),
        "field" => Ok(SplitSpec::Field),
        other => Split::parse(other).map(SplitSpec::Fixed).ok_or_else(bad),
    }
}

/// Loads a raw ESConv release (a JSON list) or a canonical JSONL corpus.
///
/// The format is detected from the first non-whitespace character; the
/// split spec applies to raw releases only.
pub fn load_corpus(path: &Path, split: &SplitSpec) -> Result<Corpus, LoadError> {
    let text = read_text(path)?;
    let canonical = text.trim_start().starts_with('{');
    let parsed = if canonical {
        Corpus::from_canonical_jsonl(&text)
    } else {
        ingest_esconv(&text, split)
    };
    parsed.map_err(|source| LoadError::Corpus {
        path: path.to_path_buf(),
        source,
    })
}
