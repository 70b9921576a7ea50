//! Dialogue-level evaluation runs: sampling, parallel self-play and the
//! on-disk layout (`transcripts/`, `selfplay.jsonl`, `manifest.json`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use multistrat_core::backend::ChatBackend;
use multistrat_core::corpus::{Corpus, Split};
use multistrat_core::selfplay::{
    aggregate, build_seeker_profile, run_dialogue, run_simulated_seeker_session, sample_dialogues, Aggregate, DialogueMeta,
    SelfPlayConfig, SelfPlayError, SelfPlayRecord,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const RECORDS_FILE: &str = "selfplay.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROFILES_FILE: &str = "profiles.jsonl";
pub const TRANSCRIPT_DIR: &str = "transcripts";

#[derive(Debug, thiserror::Error)]
pub enum DialogueError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("dialogue {id}: {source}")]
    SelfPlay { id: String, source: SelfPlayError },
    #[error("split {0} has no dialogues")]
    NoDialogues(&'static str),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DialogueError + '_ {
    move |source| DialogueError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The agents of a run. `critic` is optional only for simulated-seeker
/// sessions; `profiler` defaults to the seeker.
pub struct Agents<'a> {
    pub supporter: &'a dyn ChatBackend,
    pub seeker: &'a dyn ChatBackend,
    pub critic: Option<&'a dyn ChatBackend>,
    pub profiler: Option<&'a dyn ChatBackend>,
}

#[derive(Debug, Clone)]
pub struct DialogueEval {
    pub split: Split,
    pub n: usize,
    pub config: SelfPlayConfig,
    /// Condition a simulated seeker on profiles extracted from the corpus
    /// instead of role-playing from the situation.
    pub simulated: bool,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub split: Split,
    pub simulated: bool,
    pub config: SelfPlayConfig,
    pub seed: u64,
    /// Role name to backend profile description.
    pub profiles: BTreeMap<String, Value>,
    pub dialogues: Vec<String>,
    pub aggregate: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueRun {
    pub records: Vec<SelfPlayRecord>,
    pub manifest: RunManifest,
}

fn write_text(path: &Path, body: &str) -> Result<(), DialogueError> {
    fs::write(path, body).map_err(io_err(path))
}

fn run_one(agents: &Agents<'_>, corpus: &Corpus, index: usize, cfg: &DialogueEval) -> Result<(SelfPlayRecord, Option<String>), DialogueError> {
    let dialogue = &corpus.dialogues[index];
    let meta = DialogueMeta::of(dialogue);
    let wrap = |source| DialogueError::SelfPlay {
        id: dialogue.id.clone(),
        source,
    };
    if cfg.simulated {
        let profiler = agents.profiler.unwrap_or(agents.seeker);
        let profile = build_seeker_profile(profiler, dialogue).map_err(wrap)?;
        let record = run_simulated_seeker_session(&dialogue.id, agents.seeker, &profile, agents.supporter, agents.critic, &meta, &cfg.config)
            .map_err(wrap)?;
        Ok((record, Some(profile)))
    } else {
        let critic = agents.critic.ok_or_else(|| wrap(SelfPlayError::Config("a critic is required for self-play")))?;
        let record = run_dialogue(&dialogue.id, agents.seeker, agents.supporter, critic, &meta, &cfg.config).map_err(wrap)?;
        Ok((record, None))
    }
}

/// Samples `cfg.n` dialogues with `cfg.config.seed`, runs them concurrently
/// and writes the run directory. Output depends only on the inputs, not on
/// scheduling.
pub fn run_dialogue_eval(
    agents: &Agents<'_>,
    corpus: &Corpus,
    cfg: &DialogueEval,
    profiles: BTreeMap<String, Value>,
    out_dir: &Path,
) -> Result<DialogueRun, DialogueError> {
    cfg.config.validate().map_err(|source| DialogueError::SelfPlay {
        id: "-".into(),
        source,
    })?;
    let picked = sample_dialogues(corpus, cfg.split, cfg.n, cfg.config.seed);
    if picked.is_empty() {
        return Err(DialogueError::NoDialogues(cfg.split.as_str()));
    }
    info!("running {} dialogue(s) from the {} split", picked.len(), cfg.split.as_str());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<(SelfPlayRecord, Option<String>)> =
        pool.install(|| picked.par_iter().map(|&i| run_one(agents, corpus, i, cfg)).collect::<Result<_, _>>())?;

    let transcripts = out_dir.join(TRANSCRIPT_DIR);
    fs::create_dir_all(&transcripts).map_err(io_err(&transcripts))?;
    let mut lines = String::new();
    let mut profile_lines = String::new();
    for (record, profile) in &results {
        if let Some(reason) = &record.aborted {
            warn!("dialogue {} aborted: {reason}", record.id);
        }
        let pretty = serde_json::to_string_pretty(record).expect("serializable") + "\n";
        write_text(&transcripts.join(format!("{}.json", record.id)), &pretty)?;
        lines.push_str(&serde_json::to_string(record).expect("serializable"));
        lines.push('\n');
        if let Some(p) = profile {
            profile_lines.push_str(&serde_json::json!({"id": record.id, "profile": p}).to_string());
            profile_lines.push('\n');
        }
    }
    write_text(&out_dir.join(RECORDS_FILE), &lines)?;
    if cfg.simulated {
        write_text(&out_dir.join(PROFILES_FILE), &profile_lines)?;
    }
    let records: Vec<SelfPlayRecord> = results.into_iter().map(|(r, _)| r).collect();
    let aggregate = if cfg.simulated && agents.critic.is_none() {
        None
    } else {
        aggregate(&records).ok()
    };
    let manifest = RunManifest {
        split: cfg.split,
        simulated: cfg.simulated,
        config: cfg.config,
        seed: cfg.config.seed,
        profiles,
        dialogues: records.iter().map(|r| r.id.clone()).collect(),
        aggregate,
    };
    write_text(
        &out_dir.join(MANIFEST_FILE),
        &(serde_json::to_string_pretty(&manifest).expect("serializable") + "\n"),
    )?;
    Ok(DialogueRun { records, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use multistrat_core::backend::ScriptedBackend;
    use multistrat_core::corpus::{Dialogue, StrategyResponse, Turn};
    use multistrat_core::parse::serialize_aio;
    use multistrat_core::selfplay::Outcome;
    use multistrat_core::StrategyLabel;

    fn corpus(n: usize) -> Corpus {
        Corpus::new(
            (0..n)
                .map(|i| Dialogue {
                    id: format!("d{i:02}"),
                    problem_type: "job crisis".into(),
                    emotion_type: "anxiety".into(),
                    situation: format!("situation {i}"),
                    split: Split::Test,
                    turns: vec![Turn::seeker("hello")],
                })
                .collect(),
        )
    }

    fn supporter() -> ScriptedBackend {
        let pair = StrategyResponse::new(StrategyLabel::Question, "What is on your mind?").unwrap();
        ScriptedBackend::new().with_fallback(serialize_aio(&[pair]))
    }

    fn cfg(n: usize, simulated: bool) -> DialogueEval {
        DialogueEval {
            split: Split::Test,
            n,
            config: SelfPlayConfig {
                seed: 3,
                ..SelfPlayConfig::default()
            },
            simulated,
            workers: 4,
        }
    }

    #[test]
    fn run_directory_is_deterministic() {
        let corpus = corpus(6);
        let (sup, seek, critic) = (supporter(), ScriptedBackend::new().with_fallback("ok."), ScriptedBackend::new().with_fallback("C"));
        let agents = Agents {
            supporter: &sup,
            seeker: &seek,
            critic: Some(&critic),
            profiler: None,
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let run = run_dialogue_eval(&agents, &corpus, &cfg(4, false), BTreeMap::new(), a.path()).unwrap();
        run_dialogue_eval(&agents, &corpus, &cfg(4, false), BTreeMap::new(), b.path()).unwrap();
        assert_eq!(run.records.len(), 4);
        assert!(run.records.iter().all(|r| r.outcome == Outcome::Success && r.turns_used == 1));
        for f in [RECORDS_FILE, MANIFEST_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
        assert_eq!(fs::read_dir(a.path().join(TRANSCRIPT_DIR)).unwrap().count(), 4);
        assert_eq!(run.manifest.aggregate.unwrap().sr, 100.0);
    }

    #[test]
    fn simulated_sessions_without_critic_are_unscored() {
        let corpus = corpus(2);
        let (sup, seek, profiler) = (
            supporter(),
            ScriptedBackend::new().with_fallback("I feel low."),
            ScriptedBackend::new().with_fallback("Works in retail."),
        );
        let agents = Agents {
            supporter: &sup,
            seeker: &seek,
            critic: None,
            profiler: Some(&profiler),
        };
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(2, true);
        c.config.max_turns = 2;
        let run = run_dialogue_eval(&agents, &corpus, &c, BTreeMap::new(), dir.path()).unwrap();
        assert!(run.records.iter().all(|r| r.outcome == Outcome::Unscored));
        assert!(run.manifest.aggregate.is_none());
        let profiles = fs::read_to_string(dir.path().join(PROFILES_FILE)).unwrap();
        assert_eq!(profiles.lines().count(), 2);
        assert!(profiles.contains("Works in retail."));
    }

    #[test]
    fn selfplay_requires_a_critic() {
        let corpus = corpus(1);
        let s = supporter();
        let agents = Agents {
            supporter: &s,
            seeker: &s,
            critic: None,
            profiler: None,
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(run_dialogue_eval(&agents, &corpus, &cfg(1, false), BTreeMap::new(), dir.path()).is_err());
        let empty = Corpus::new(vec![]);
        assert!(matches!(
            run_dialogue_eval(&agents, &empty, &cfg(1, false), BTreeMap::new(), dir.path()),
            Err(DialogueError::NoDialogues(_))
        ));
    }
}
