//! Resumable utterance-level evaluation.
//!
//! Items are appended to `records.jsonl` as they finish, which is the source
//! of truth for resuming. `checkpoint.json` names the last completed item and
//! `report.json` is written once every target has a record.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::{info, warn};
use multistrat_core::backend::{ChatBackend, ChatMessage, ScriptedBackend};
use multistrat_core::corpus::{Corpus, Split};
use multistrat_core::instances::render_prompt;
use multistrat_core::metrics::{BleuOptions, MetricError, MetricReport};
use multistrat_core::orchestrate::{eval_targets, eval_turn, reference_output, report_from_items, EvalItem, GenerationConfig, GenerationError};
use multistrat_core::parse::Regime;
use multistrat_core::prompts::format_context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: corrupt record: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("backend failed after {completed} completed item(s); rerun to resume: {source}")]
    Backend { completed: usize, source: GenerationError },
    #[error(transparent)]
    Generation(GenerationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemKey {
    pub dialogue_id: String,
    pub turn_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub completed: usize,
    pub last: Option<ItemKey>,
}

#[derive(Debug, Clone)]
pub struct UtteranceEval {
    pub split: Split,
    pub regime: Regime,
    pub generation: GenerationConfig,
    pub bleu: BleuOptions,
    /// Evaluate only the first `limit` targets of the split.
    pub limit: Option<usize>,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub split: Split,
    pub regime: Regime,
    pub reasoning: bool,
    pub resumed: usize,
    pub report: MetricReport,
}

/// Parses a records file. Returns the items and, when the final line is an
/// incomplete write, the byte offset where it starts. Damage anywhere else
/// is an error.
pub fn parse_records(path: &Path, text: &str) -> Result<(Vec<EvalItem>, Option<usize>), RunError> {
    let mut items = Vec::new();
    let mut offset = 0;
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        let body = line.trim();
        if !body.is_empty() {
            let last = i + 1 == lines.len();
            match serde_json::from_str::<EvalItem>(body) {
                Ok(item) if line.ends_with('\n') => items.push(item),
                _ if last => return Ok((items, Some(offset))),
                Ok(_) => unreachable!("only the last line can lack a newline"),
                Err(e) => {
                    return Err(RunError::Corrupt {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        offset += line.len();
    }
    Ok((items, None))
}

/// Reads finished items, cutting an incomplete trailing line (left by an
/// interrupted write) off the file.
pub fn read_records(path: &Path) -> Result<Vec<EvalItem>, RunError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let (items, tail) = parse_records(path, &text)?;
    if let Some(offset) = tail {
        warn!("{}: dropping incomplete trailing record", path.display());
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(offset as u64).map_err(io_err(path))?;
    }
    Ok(items)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let tmp = path.with_extension("json.tmp");
    let body = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(&tmp, body).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

struct Sink {
    file: File,
    completed: usize,
}

/// Runs (or resumes) an evaluation into `out_dir`.
pub fn run_utterance_eval(backend: &dyn ChatBackend, corpus: &Corpus, cfg: &UtteranceEval, out_dir: &Path) -> Result<EvalSummary, RunError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let records = out_dir.join(RECORDS_FILE);
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    let done = read_records(&records)?;
    let done_keys: BTreeSet<(String, usize)> = done.iter().map(|i| (i.dialogue_id.clone(), i.turn_index)).collect();
    let mut targets = eval_targets(corpus, cfg.split);
    if let Some(limit) = cfg.limit {
        targets.truncate(limit);
    }
    let wanted: BTreeSet<(String, usize)> = targets
        .iter()
        .map(|t| (corpus.dialogues[t.dialogue].id.clone(), t.turn_index))
        .collect();
    let todo: Vec<_> = targets
        .into_iter()
        .filter(|t| !done_keys.contains(&(corpus.dialogues[t.dialogue].id.clone(), t.turn_index)))
        .collect();
    let resumed = done.len();
    if resumed > 0 {
        info!("resuming: {resumed} item(s) already done, {} to go", todo.len());
    }
    let file = OpenOptions::new().create(true).append(true).open(&records).map_err(io_err(&records))?;
    let sink = Mutex::new(Sink { file, completed: resumed });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .expect("thread pool");
    let result = pool.install(|| {
        todo.par_iter().try_for_each(|&target| -> Result<(), RunError> {
            let item = match eval_turn(backend, corpus, target, cfg.regime, &cfg.generation) {
                Ok(item) => item,
                Err(e @ GenerationError::Backend(_)) => {
                    let completed = sink.lock().expect("sink lock").completed;
                    return Err(RunError::Backend { completed, source: e });
                }
                Err(e) => return Err(RunError::Generation(e)),
            };
            let line = serde_json::to_string(&item).expect("serializable") + "\n";
            let mut sink = sink.lock().expect("sink lock");
            sink.file.write_all(line.as_bytes()).and_then(|_| sink.file.flush()).map_err(io_err(&records))?;
            sink.completed += 1;
            write_json(
                &checkpoint,
                &Checkpoint {
                    completed: sink.completed,
                    last: Some(ItemKey {
                        dialogue_id: item.dialogue_id.clone(),
                        turn_index: item.turn_index,
                    }),
                },
            )
        })
    });
    result?;
    let items: Vec<EvalItem> = read_records(&records)?
        .into_iter()
        .filter(|i| wanted.contains(&(i.dialogue_id.clone(), i.turn_index)))
        .collect();
    let report = report_from_items(&items, cfg.bleu)?;
    let summary = EvalSummary {
        split: cfg.split,
        regime: cfg.regime,
        reasoning: cfg.generation.reasoning,
        resumed,
        report,
    };
    write_json(&out_dir.join(REPORT_FILE), &summary)?;
    Ok(summary)
}

/// A scripted backend that answers every prompt of `split` with the gold
/// reference, as a perfect model would.
/// Turns whose prompts coincide share one entry (the last one inserted), so
/// the mock is exact only when every context in the split is distinct.
pub fn echo_backend(corpus: &Corpus, split: Split, regime: Regime) -> ScriptedBackend {
    let mut backend = ScriptedBackend::new();
    for dialogue in corpus.in_split(split) {
        for (turn_index, pairs) in dialogue.supporter_turns() {
            let history = &dialogue.turns[..turn_index];
            let steps = if regime == Regime::Obo { pairs.len() } else { 1 };
            for step in 0..steps {
                let pending = if regime == Regime::Obo { &pairs[..step] } else { &[][..] };
                let prompt = render_prompt(regime, false, &format_context(history, pending)).expect("plain prompts render");
                backend.insert(&[ChatMessage::user(prompt)], 0, reference_output(pairs, regime, step));
            }
        }
    }
    backend
}
