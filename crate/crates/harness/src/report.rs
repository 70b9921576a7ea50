//! Summaries of finished runs as aligned text tables and `summary.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use multistrat_core::metrics::{BleuOptions, MetricError, MetricReport};
use multistrat_core::orchestrate::report_from_items;
use multistrat_core::selfplay::{aggregate, Aggregate, SelfPlayError, SelfPlayRecord};
use serde::Serialize;

use crate::eval::{self, parse_records, RunError};
use crate::dialogue;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no {} or {} files found under the given paths", eval::RECORDS_FILE, dialogue::RECORDS_FILE)]
    Empty,
    #[error("{path}:{line}: corrupt record: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Metric { path: PathBuf, source: MetricError },
    #[error("{path}: {source}")]
    SelfPlay { path: PathBuf, source: SelfPlayError },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceRow {
    pub system: String,
    pub path: PathBuf,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DialogueRow {
    pub system: String,
    pub path: PathBuf,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Summary {
    pub utterance: Vec<UtteranceRow>,
    pub dialogue: Vec<DialogueRow>,
}

fn find_records(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    let io = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let meta = fs::metadata(path).map_err(io)?;
    if meta.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    entries.sort();
    for entry in entries {
        let name = entry.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if entry.is_dir() {
            find_records(&entry, out)?;
        } else if name == eval::RECORDS_FILE || name == dialogue::RECORDS_FILE {
            out.push(entry);
        }
    }
    Ok(())
}

/// The system name of a records file: its directory, or the file stem.
fn system_name(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_selfplay(path: &Path, text: &str) -> Result<Vec<SelfPlayRecord>, ReportError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ReportError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Builds the summary of every records file found under `paths`.
pub fn summarize(paths: &[PathBuf], bleu: BleuOptions) -> Result<Summary, ReportError> {
    let mut files = Vec::new();
    for p in paths {
        find_records(p, &mut files)?;
    }
    let mut summary = Summary::default();
    for path in files {
        let text = fs::read_to_string(&path).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        let system = system_name(&path);
        if path.file_name().and_then(|n| n.to_str()) == Some(dialogue::RECORDS_FILE) {
            let records = read_selfplay(&path, &text)?;
            let aggregate = aggregate(&records).map_err(|source| ReportError::SelfPlay {
                path: path.clone(),
                source,
            })?;
            summary.dialogue.push(DialogueRow { system, path, aggregate });
        } else {
            let items = match parse_records(&path, &text) {
                Ok((items, None)) => items,
                Ok((items, Some(_))) => {
                    return Err(ReportError::Corrupt {
                        path: path.clone(),
                        line: items.len() + 1,
                        message: "incomplete trailing record (resume the run first)".into(),
                    })
                }
                Err(RunError::Corrupt { path, line, message }) => return Err(ReportError::Corrupt { path, line, message }),
                Err(e) => unreachable!("parsing only fails as corrupt: {e}"),
            };
            let report = report_from_items(&items, bleu).map_err(|source| ReportError::Metric {
                path: path.clone(),
                source,
            })?;
            summary.utterance.push(UtteranceRow { system, path, report });
        }
    }
    if summary.utterance.is_empty() && summary.dialogue.is_empty() {
        return Err(ReportError::Empty);
    }
    Ok(summary)
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &mut dyn Iterator<Item = &str>, out: &mut String| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut header.iter().copied(), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for row in rows {
        line(&mut row.iter().map(String::as_str), &mut out);
    }
    out
}

fn f2(x: f64) -> String {
    format!("{x:.2}")
}

impl Summary {
    /// Text tables, one section per evaluation level present.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.utterance.is_empty() {
            let rows: Vec<Vec<String>> = self
                .utterance
                .iter()
                .map(|r| {
                    let m = &r.report;
                    vec![
                        r.system.clone(),
                        f2(m.emr),
                        f2(m.lr),
                        f2(m.ald),
                        f2(m.bleu.b1),
                        f2(m.bleu.b2),
                        f2(m.bleu.b4),
                        f2(m.rouge.r1),
                        f2(m.rouge.r2),
                        f2(m.rouge.rl),
                        f2(m.multi_strategy_rate),
                        m.n.to_string(),
                        m.failed.to_string(),
                    ]
                })
                .collect();
            out.push_str("Utterance level\n");
            out.push_str(&table(
                &["System", "EMR", "LR", "ALD", "B-1", "B-2", "B-4", "R-1", "R-2", "R-L", "Multi", "n", "failed"],
                &rows,
            ));
        }
        if !self.dialogue.is_empty() {
            if !out.is_empty() {
                out.push('\n');
            }
            let rows: Vec<Vec<String>> = self
                .dialogue
                .iter()
                .map(|r| {
                    let a = &r.aggregate;
                    vec![r.system.clone(), f2(a.at), f2(a.as_), f2(a.sr), a.n.to_string(), a.aborted.to_string()]
                })
                .collect();
            out.push_str("Dialogue level\n");
            out.push_str(&table(&["System", "AT", "AS", "SR", "n", "aborted"], &rows));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}
