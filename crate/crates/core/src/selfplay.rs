//! Dialogue-level evaluation: a seeker agent, the supporter under test and a
//! critic that scores the seeker's emotional state after every supporter turn.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatBackend, ChatMessage};
use crate::corpus::{Corpus, Dialogue, Speaker, Split, Turn};
use crate::orchestrate::{generate, GenerationConfig, GenerationError};
use crate::parse::Regime;
use crate::prompts::{format_context, render, Bindings, TemplateId};

/// Sentence a simulated seeker uses to end the conversation.
pub const QUIT_SENTENCE: &str = "Please stop the conversation now";

/// Scalar reward per critic level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRewards {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

impl Default for LevelRewards {
    fn default() -> Self {
        LevelRewards {
            a: -1.0,
            b: 0.0,
            c: 0.5,
            d: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    A,
    B,
    C,
    D,
}

impl LevelRewards {
    pub fn reward(&self, level: Level) -> f64 {
        match level {
            Level::A => self.a,
            Level::B => self.b,
            Level::C => self.c,
            Level::D => self.d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfPlayConfig {
    pub max_turns: usize,
    pub critic_samples: u32,
    pub success_threshold: f64,
    pub level_rewards: LevelRewards,
    pub regime: Regime,
    pub generation: GenerationConfig,
    pub seed: u64,
}

impl Default for SelfPlayConfig {
    fn default() -> Self {
        SelfPlayConfig {
            max_turns: 10,
            critic_samples: 10,
            success_threshold: 0.5,
            level_rewards: LevelRewards::default(),
            regime: Regime::Aio,
            generation: GenerationConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelfPlayError {
    #[error("invalid self-play config: {0}")]
    Config(&'static str),
    #[error("dialogue has no turns")]
    EmptyDialogue,
    #[error("dialogue metadata field `{0}` is empty")]
    Meta(&'static str),
    #[error("no completed dialogues to aggregate")]
    Empty,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl SelfPlayConfig {
    pub fn validate(&self) -> Result<(), SelfPlayError> {
        if self.max_turns == 0 {
            return Err(SelfPlayError::Config("max_turns must be at least 1"));
        }
        if self.critic_samples == 0 {
            return Err(SelfPlayError::Config("critic_samples must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueMeta {
    pub problem_type: String,
    pub emotion_type: String,
    pub situation: String,
}

impl DialogueMeta {
    pub fn of(dialogue: &Dialogue) -> Self {
        DialogueMeta {
            problem_type: dialogue.problem_type.clone(),
            emotion_type: dialogue.emotion_type.clone(),
            situation: dialogue.situation.clone(),
        }
    }

    fn check(&self) -> Result<(), SelfPlayError> {
        for (name, value) in [
            ("problem_type", &self.problem_type),
            ("emotion_type", &self.emotion_type),
            ("situation", &self.situation),
        ] {
            if value.trim().is_empty() {
                return Err(SelfPlayError::Meta(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    /// No critic was attached (human-evaluation transcripts).
    Unscored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCause {
    Threshold,
    Cap,
    SeekerQuit,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfPlayRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub meta: DialogueMeta,
    pub transcript: Vec<Turn>,
    pub per_turn_scores: Vec<f64>,
    pub outcome: Outcome,
    pub turns_used: usize,
    pub strategies_used: usize,
    pub stop_cause: StopCause,
    pub max_turns: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl SelfPlayRecord {
    pub fn is_aborted(&self) -> bool {
        self.aborted.is_some()
    }
}

/// Level named by the first standalone `A`-`D` token.
pub fn parse_level(text: &str) -> Option<Level> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .find_map(|tok| match tok {
            "A" => Some(Level::A),
            "B" => Some(Level::B),
            "C" => Some(Level::C),
            "D" => Some(Level::D),
            _ => None,
        })
}

/// Conversation lines for the critic: `Patient:` for the seeker, `Therapist:` for the supporter.
pub fn critic_conversation(transcript: &[Turn]) -> String {
    transcript
        .iter()
        .map(|t| match t.speaker() {
            Speaker::Seeker => alloc::format!("Patient: {}", t.text()),
            Speaker::Supporter => alloc::format!("Therapist: {}", t.text()),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Mean level reward over `samples` critic completions.
///
/// Sample `i` uses sample index `i`; an unmappable response is resampled once
/// with index `samples + i` and then scored as level B.
pub fn critic_score(
    critic: &dyn ChatBackend,
    conversation: &str,
    emotion_type: &str,
    problem_type: &str,
    samples: u32,
    rewards: &LevelRewards,
) -> Result<f64, SelfPlayError> {
    if samples == 0 {
        return Err(SelfPlayError::Config("critic_samples must be at least 1"));
    }
    let bindings = Bindings::new()
        .with("conversation", conversation)
        .with("emotion_type", emotion_type)
        .with("problem_type", problem_type);
    let prompt = render(TemplateId::SelfplayCritic, &bindings).map_err(|_| SelfPlayError::Meta("conversation"))?;
    let messages = [
        ChatMessage::system(TemplateId::SelfplayCriticSystem.source()),
        ChatMessage::user(prompt),
    ];
    let mut total = 0.0;
    for i in 0..samples {
        let mut level = parse_level(&critic.complete(&messages, i)?);
        if level.is_none() {
            level = parse_level(&critic.complete(&messages, samples + i)?);
        }
        total += rewards.reward(level.unwrap_or(Level::B));
    }
    Ok(total / f64::from(samples))
}

/// How the seeker produces its next message.
enum Seeker<'a> {
    /// Role-play conversation seeded with the system/user/situation triple.
    Agent(&'a dyn ChatBackend, Vec<ChatMessage>),
    /// Single prompt over the dialogue history and an extracted profile.
    Simulated(&'a dyn ChatBackend, String),
}

impl Seeker<'_> {
    fn reply(&mut self, transcript: &[Turn], meta: &DialogueMeta) -> Result<String, BackendError> {
        match self {
            Seeker::Agent(backend, messages) => {
                let last = transcript.last().expect("seeker replies after a supporter turn");
                messages.push(ChatMessage::user(last.text()));
                let reply = backend.complete(messages, 0)?;
                messages.push(ChatMessage::assistant(reply.clone()));
                Ok(reply)
            }
            Seeker::Simulated(backend, profile) => {
                let bindings = Bindings::new()
                    .with("situation", meta.situation.as_str())
                    .with("personal_summary", profile.as_str())
                    .with("dialogue_history", format_context(transcript, &[]));
                let prompt = render(TemplateId::SeekerSimulation, &bindings)
                    .map_err(|e| BackendError::Invalid(e.to_string()))?;
                backend.complete(&[ChatMessage::user(prompt)], 0)
            }
        }
    }
}

struct Critic<'a> {
    backend: &'a dyn ChatBackend,
}

fn run(
    id: &str,
    mut seeker: Seeker<'_>,
    opening: String,
    supporter: &dyn ChatBackend,
    critic: Option<Critic<'_>>,
    meta: &DialogueMeta,
    cfg: &SelfPlayConfig,
) -> Result<SelfPlayRecord, SelfPlayError> {
    cfg.validate()?;
    meta.check()?;
    let mut record = SelfPlayRecord {
        id: id.to_string(),
        system: None,
        meta: meta.clone(),
        transcript: vec![Turn::seeker(opening)],
        per_turn_scores: Vec::new(),
        outcome: if critic.is_some() { Outcome::Failure } else { Outcome::Unscored },
        turns_used: 0,
        strategies_used: 0,
        stop_cause: StopCause::Cap,
        max_turns: cfg.max_turns,
        aborted: None,
    };
    let abort = |mut record: SelfPlayRecord, why: String| {
        record.stop_cause = StopCause::Aborted;
        record.outcome = Outcome::Failure;
        record.aborted = Some(why);
        Ok(record)
    };
    while record.turns_used < cfg.max_turns {
        let generated = match generate(supporter, cfg.regime, &record.transcript, &cfg.generation) {
            Ok(g) => g,
            Err(e @ (GenerationError::Backend(_) | GenerationError::Unparseable { .. })) => {
                return abort(record, alloc::format!("supporter: {e}"))
            }
            Err(e) => return abort(record, e.to_string()),
        };
        record.turns_used += 1;
        record.strategies_used += generated.pairs.len();
        record.transcript.push(Turn::supporter(generated.pairs));

        let reply = match seeker.reply(&record.transcript, meta) {
            Ok(r) => r,
            Err(e) => return abort(record, alloc::format!("seeker: {e}")),
        };
        let quit = reply.contains(QUIT_SENTENCE);
        record.transcript.push(Turn::seeker(reply));

        if let Some(critic) = &critic {
            let score = match critic_score(
                critic.backend,
                &critic_conversation(&record.transcript),
                &meta.emotion_type,
                &meta.problem_type,
                cfg.critic_samples,
                &cfg.level_rewards,
            ) {
                Ok(s) => s,
                Err(e) => return abort(record, alloc::format!("critic: {e}")),
            };
            record.per_turn_scores.push(score);
            if score >= cfg.success_threshold {
                record.outcome = Outcome::Success;
                record.stop_cause = StopCause::Threshold;
                return Ok(record);
            }
        }
        if quit {
            record.stop_cause = StopCause::SeekerQuit;
            return Ok(record);
        }
    }
    Ok(record)
}

/// Runs one self-play dialogue with a role-playing seeker agent.
///
/// The situation is the seeker's opening message. Each round is supporter
/// turn, seeker reply, critic score; the dialogue stops at the first score at
/// or above the threshold, when the seeker quits, or at `max_turns`.
pub fn run_dialogue(
    id: &str,
    seeker: &dyn ChatBackend,
    supporter: &dyn ChatBackend,
    critic: &dyn ChatBackend,
    meta: &DialogueMeta,
    cfg: &SelfPlayConfig,
) -> Result<SelfPlayRecord, SelfPlayError> {
    meta.check()?;
    let user = render(
        TemplateId::SelfplaySeekerUser,
        &Bindings::new()
            .with("emotion_type", meta.emotion_type.as_str())
            .with("problem_type", meta.problem_type.as_str()),
    )
    .map_err(|_| SelfPlayError::Meta("emotion_type"))?;
    let messages = vec![
        ChatMessage::system(TemplateId::SelfplaySeekerSystem.source()),
        ChatMessage::user(user),
        ChatMessage::assistant(meta.situation.clone()),
    ];
    run(
        id,
        Seeker::Agent(seeker, messages),
        meta.situation.clone(),
        supporter,
        Some(Critic { backend: critic }),
        meta,
        cfg,
    )
}

/// Runs a session against a profile-conditioned simulated seeker, for human
/// evaluation. The seeker's first message is generated from an empty history.
pub fn run_simulated_seeker_session(
    id: &str,
    seeker: &dyn ChatBackend,
    profile: &str,
    supporter: &dyn ChatBackend,
    critic: Option<&dyn ChatBackend>,
    meta: &DialogueMeta,
    cfg: &SelfPlayConfig,
) -> Result<SelfPlayRecord, SelfPlayError> {
    meta.check()?;
    if profile.trim().is_empty() {
        return Err(SelfPlayError::Meta("personal_summary"));
    }
    let mut sim = Seeker::Simulated(seeker, profile.to_string());
    let opening = sim.reply(&[], meta)?;
    run(id, sim, opening, supporter, critic.map(|backend| Critic { backend }), meta, cfg)
}

/// Transcript lines for profile extraction: `Seeker:` / `Supporter:`.
fn dialogue_transcript(dialogue: &Dialogue) -> String {
    dialogue
        .turns
        .iter()
        .map(|t| match t.speaker() {
            Speaker::Seeker => alloc::format!("Seeker: {}", t.text()),
            Speaker::Supporter => alloc::format!("Supporter: {}", t.text()),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Summarizes the seeker's personal information from a corpus dialogue.
pub fn build_seeker_profile(profiler: &dyn ChatBackend, dialogue: &Dialogue) -> Result<String, SelfPlayError> {
    if dialogue.turns.is_empty() {
        return Err(SelfPlayError::EmptyDialogue);
    }
    let prompt = render(
        TemplateId::ProfileExtraction,
        &Bindings::new().with("dialog", dialogue_transcript(dialogue)),
    )
    .map_err(|_| SelfPlayError::EmptyDialogue)?;
    Ok(profiler.complete(&[ChatMessage::user(prompt)], 0)?.trim().to_string())
}

/// Picks `n` dialogues of `split` (all of them if fewer), as corpus indices
/// in corpus order. The choice depends only on `seed`.
pub fn sample_dialogues(corpus: &Corpus, split: Split, n: usize, seed: u64) -> Vec<usize> {
    let pool: Vec<usize> = (0..corpus.dialogues.len())
        .filter(|&i| corpus.dialogues[i].split == split)
        .collect();
    if n >= pool.len() {
        return pool;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, pool.len(), n).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Average turns; failures count as `max_turns`.
    pub at: f64,
    /// Average strategies used per dialogue.
    #[serde(rename = "as")]
    pub as_: f64,
    /// Success rate, percent.
    pub sr: f64,
    pub n: usize,
    pub aborted: usize,
}

/// AT / AS / SR over completed records; aborted records are only counted.
pub fn aggregate(records: &[SelfPlayRecord]) -> Result<Aggregate, SelfPlayError> {
    let done: Vec<&SelfPlayRecord> = records.iter().filter(|r| !r.is_aborted()).collect();
    if done.is_empty() {
        return Err(SelfPlayError::Empty);
    }
    let n = done.len() as f64;
    let successes = done.iter().filter(|r| r.outcome == Outcome::Success).count();
    let turns: usize = done
        .iter()
        .map(|r| if r.outcome == Outcome::Success { r.turns_used } else { r.max_turns })
        .sum();
    let strategies: usize = done.iter().map(|r| r.strategies_used).sum();
    Ok(Aggregate {
        at: turns as f64 / n,
        as_: strategies as f64 / n,
        sr: 100.0 * successes as f64 / n,
        n: done.len(),
        aborted: records.len() - done.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::corpus::StrategyResponse;
    use crate::parse::serialize_aio;
    use crate::strategy::StrategyLabel::{Information as Info, Question as Q};
    use core::sync::atomic::{AtomicUsize, Ordering};

    fn meta() -> DialogueMeta {
        DialogueMeta {
            problem_type: "job crisis".into(),
            emotion_type: "anxiety".into(),
            situation: "I was laid off last week.".into(),
        }
    }

    fn supporter(n_pairs: usize) -> ScriptedBackend {
        let pairs: Vec<_> = [Q, Info][..n_pairs]
            .iter()
            .map(|s| StrategyResponse::new(*s, "I hear you.").unwrap())
            .collect();
        ScriptedBackend::new().with_fallback(serialize_aio(&pairs))
    }

    fn seeker() -> ScriptedBackend {
        ScriptedBackend::new().with_fallback("I still feel bad.")
    }

    fn critic(letter: &'static str) -> ScriptedBackend {
        ScriptedBackend::new().with_fallback(letter)
    }

    /// Critic answering B until the `success_round`-th round, then D.
    fn critic_succeeding_at(success_round: usize, samples: usize) -> ScriptedBackend {
        let calls = AtomicUsize::new(0);
        ScriptedBackend::new().with_responder(move |_, _| {
            let round = calls.fetch_add(1, Ordering::SeqCst) / samples + 1;
            Some(if round >= success_round { "D".into() } else { "B".into() })
        })
    }

    #[test]
    fn level_parsing() {
        assert_eq!(parse_level("D. Yes, the Patient's issue has been solved."), Some(Level::D));
        assert_eq!(parse_level("As a critic I pick C"), Some(Level::C));
        assert_eq!(parse_level("(B)"), Some(Level::B));
        assert_eq!(parse_level("a b c d"), None);
        assert_eq!(parse_level("AB"), None);
    }

    #[test]
    fn critic_score_examples() {
        let r = LevelRewards::default();
        let d = critic("D. Yes, the Patient's issue has been solved.");
        assert_eq!(critic_score(&d, "Patient: hi", "anxiety", "job", 10, &r), Ok(1.0));
        let mixed = ScriptedBackend::new().with_responder(|_, i| Some(if i < 5 { "A".into() } else { "C".into() }));
        assert_eq!(critic_score(&mixed, "Patient: hi", "anxiety", "job", 10, &r), Ok(-0.25));
        assert_eq!(critic_score(&critic("B"), "Patient: hi", "anxiety", "job", 1, &r), Ok(0.0));
    }

    #[test]
    fn unmappable_critic_resamples_then_defaults_to_b() {
        let r = LevelRewards::default();
        let retry = ScriptedBackend::new().with_responder(|_, i| Some(if i >= 2 { "D".into() } else { "hmm".into() }));
        assert_eq!(critic_score(&retry, "Patient: hi", "anxiety", "job", 2, &r), Ok(1.0));
        assert_eq!(retry.calls(), 4);
        assert_eq!(critic_score(&critic("unsure"), "Patient: hi", "anxiety", "job", 3, &r), Ok(0.0));
    }

    #[test]
    fn always_d_succeeds_in_one_turn() {
        let cfg = SelfPlayConfig::default();
        let rec = run_dialogue("x", &seeker(), &supporter(1), &critic("D"), &meta(), &cfg).unwrap();
        assert_eq!((rec.outcome, rec.turns_used, rec.stop_cause), (Outcome::Success, 1, StopCause::Threshold));
        assert_eq!(rec.per_turn_scores, vec![1.0]);
        assert_eq!(rec.transcript.len(), 3);
    }

    #[test]
    fn always_b_fails_at_cap() {
        let cfg = SelfPlayConfig::default();
        let rec = run_dialogue("x", &seeker(), &supporter(1), &critic("B"), &meta(), &cfg).unwrap();
        assert_eq!((rec.outcome, rec.turns_used, rec.stop_cause), (Outcome::Failure, 10, StopCause::Cap));
        assert_eq!(rec.per_turn_scores.len(), 10);
    }

    #[test]
    fn strategies_are_counted() {
        let cfg = SelfPlayConfig::default();
        let rec = run_dialogue("x", &seeker(), &supporter(2), &critic_succeeding_at(3, 10), &meta(), &cfg).unwrap();
        assert_eq!((rec.outcome, rec.turns_used, rec.strategies_used), (Outcome::Success, 3, 6));
    }

    #[test]
    fn seeker_conversation_is_seeded_with_situation() {
        let s = ScriptedBackend::new().with_responder(|m, _| {
            assert_eq!(m[0].role, crate::backend::Role::System);
            assert!(m[1].content.contains("anxiety regarding job crisis"));
            assert_eq!(m[2].content, "I was laid off last week.");
            assert_eq!(m[3].content, "I hear you.");
            Some("ok".into())
        });
        let cfg = SelfPlayConfig::default();
        run_dialogue("x", &s, &supporter(1), &critic("D"), &meta(), &cfg).unwrap();
    }

    #[test]
    fn seeker_quit_stops_the_dialogue() {
        let calls = AtomicUsize::new(0);
        let s = ScriptedBackend::new().with_responder(move |_, _| {
            Some(if calls.fetch_add(1, Ordering::SeqCst) == 2 {
                "Thanks. Please stop the conversation now.".into()
            } else {
                "hmm".into()
            })
        });
        let rec =
            run_simulated_seeker_session("x", &s, "A student.", &supporter(1), Some(&critic("B")), &meta(), &SelfPlayConfig::default())
                .unwrap();
        assert_eq!((rec.stop_cause, rec.turns_used, rec.outcome), (StopCause::SeekerQuit, 2, Outcome::Failure));
        let unscored =
            run_simulated_seeker_session("x", &seeker(), "A student.", &supporter(1), None, &meta(), &SelfPlayConfig::default()).unwrap();
        assert_eq!((unscored.outcome, unscored.turns_used), (Outcome::Unscored, 10));
        assert!(unscored.per_turn_scores.is_empty());
    }

    #[test]
    fn backend_failure_aborts_the_record() {
        let rec = run_dialogue("x", &seeker(), &ScriptedBackend::new(), &critic("D"), &meta(), &SelfPlayConfig::default()).unwrap();
        assert!(rec.is_aborted());
        assert_eq!(rec.stop_cause, StopCause::Aborted);
    }

    fn record(outcome: Outcome, turns: usize, strategies: usize) -> SelfPlayRecord {
        SelfPlayRecord {
            id: "x".into(),
            system: None,
            meta: meta(),
            transcript: Vec::new(),
            per_turn_scores: Vec::new(),
            outcome,
            turns_used: turns,
            strategies_used: strategies,
            stop_cause: StopCause::Cap,
            max_turns: 10,
            aborted: None,
        }
    }

    #[test]
    fn aggregate_examples() {
        let agg = aggregate(&[record(Outcome::Success, 4, 4), record(Outcome::Failure, 10, 10)]).unwrap();
        assert_eq!((agg.sr, agg.at, agg.as_), (50.0, 7.0, 7.0));
        let agg = aggregate(&[record(Outcome::Success, 1, 1), record(Outcome::Success, 1, 1)]).unwrap();
        assert_eq!((agg.sr, agg.at, agg.as_), (100.0, 1.0, 1.0));
        let quit = record(Outcome::Failure, 2, 2);
        let agg = aggregate(&[quit]).unwrap();
        assert_eq!((agg.sr, agg.at), (0.0, 10.0));
        let mut aborted = record(Outcome::Failure, 1, 1);
        aborted.aborted = Some("boom".into());
        assert_eq!(aggregate(&[aborted.clone()]), Err(SelfPlayError::Empty));
        let agg = aggregate(&[aborted, record(Outcome::Success, 1, 1)]).unwrap();
        assert_eq!((agg.n, agg.aborted), (1, 1));
    }

    #[test]
    fn profile_extraction() {
        let d = Dialogue {
            id: "d".into(),
            problem_type: "p".into(),
            emotion_type: "e".into(),
            situation: "s".into(),
            split: crate::corpus::Split::Test,
            turns: vec![Turn::seeker("I'm a nurse and tired.")],
        };
        let p = ScriptedBackend::new().with_responder(|m, _| {
            assert!(m[0].content.contains("Seeker: I'm a nurse and tired."));
            Some(" A nurse. ".into())
        });
        assert_eq!(build_seeker_profile(&p, &d).unwrap(), "A nurse.");
        let empty = Dialogue { turns: vec![], ..d };
        assert_eq!(build_seeker_profile(&p, &empty), Err(SelfPlayError::EmptyDialogue));
    }

    #[test]
    fn sampling_is_seeded_and_split_bound() {
        let d = |i: usize, split| Dialogue {
            id: alloc::format!("d{i}"),
            problem_type: "p".into(),
            emotion_type: "e".into(),
            situation: "s".into(),
            split,
            turns: vec![Turn::seeker("hi")],
        };
        let corpus = Corpus::new(
            (0..20)
                .map(|i| d(i, if i % 2 == 0 { Split::Test } else { Split::Train }))
                .collect(),
        );
        let a = sample_dialogues(&corpus, Split::Test, 4, 7);
        assert_eq!(a, sample_dialogues(&corpus, Split::Test, 4, 7));
        assert_eq!(a.len(), 4);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a.iter().all(|&i| corpus.dialogues[i].split == Split::Test));
        assert_eq!(sample_dialogues(&corpus, Split::Test, 50, 7).len(), 10);
    }
}
