//! Supporter-utterance generation for the three regimes, and the per-turn
//! building blocks of utterance-level evaluation.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatBackend, ChatMessage};
use crate::corpus::{Corpus, Speaker, Split, StrategyResponse, Turn};
use crate::instances::{render_prompt, InstanceError};
use crate::metrics::{metric_report, BleuOptions, MetricError, MetricReport, Utterance};
use crate::parse::{parse_answer, parse_reasoned, Mode, ParseError, Parsed, Regime, Salvage};
use crate::prompts::format_context;
use crate::reasoning::ReasoningChain;

/// Step cap for One-by-One generation.
pub const MAX_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub reasoning: bool,
    pub mode: Mode,
    /// Extra attempts after a malformed generation.
    pub resample: u32,
    pub max_steps: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            reasoning: false,
            mode: Mode::Strict,
            resample: 0,
            max_steps: MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Flag,
    Cap,
    SingleShot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedUtterance {
    pub pairs: Vec<StrategyResponse>,
    pub regime: Regime,
    pub steps_used: usize,
    pub stop_reason: StopReason,
    /// Every raw generation, including discarded attempts.
    pub raw: Vec<String>,
    /// Reasoning chain of the first step, when reasoning is enabled.
    pub chain: Option<ReasoningChain>,
    pub diagnostics: Vec<Salvage>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerationError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable output after {attempts} attempt(s): {last}")]
    Unparseable {
        attempts: u32,
        last: ParseError,
        raw: Vec<String>,
        /// Pairs accumulated by earlier One-by-One steps.
        pairs: Vec<StrategyResponse>,
    },
    #[error("history must be empty or end with a seeker turn")]
    History,
    #[error("max_steps must be at least 1")]
    Steps,
    #[error(transparent)]
    Prompt(#[from] InstanceError),
}

struct Step {
    answer: Parsed,
    chain: Option<ReasoningChain>,
    diagnostics: Vec<Salvage>,
}

fn parse_step(text: &str, regime: Regime, cfg: &GenerationConfig) -> Result<Step, ParseError> {
    if cfg.reasoning {
        let out = parse_reasoned(text, regime, cfg.mode)?;
        Ok(Step {
            answer: out.value.answer,
            chain: out.value.chain,
            diagnostics: out.diagnostics,
        })
    } else {
        let out = parse_answer(text, regime, cfg.mode)?;
        Ok(Step {
            answer: out.value,
            chain: None,
            diagnostics: out.diagnostics,
        })
    }
}

/// Completes `prompt` until it parses or the resampling budget runs out.
/// Attempt `a` uses sample index `a`.
fn complete_parsed(
    backend: &dyn ChatBackend,
    prompt: &str,
    regime: Regime,
    cfg: &GenerationConfig,
    raw: &mut Vec<String>,
    pairs_so_far: &[StrategyResponse],
) -> Result<Step, GenerationError> {
    let messages = [ChatMessage::user(prompt)];
    let mut last = ParseError::Unparseable;
    for attempt in 0..=cfg.resample {
        let text = backend.complete(&messages, attempt)?;
        let parsed = parse_step(&text, regime, cfg);
        raw.push(text);
        match parsed {
            Ok(step) => return Ok(step),
            Err(e) => last = e,
        }
    }
    Err(GenerationError::Unparseable {
        attempts: cfg.resample + 1,
        last,
        raw: core::mem::take(raw),
        pairs: pairs_so_far.to_vec(),
    })
}

fn check_history(history: &[Turn]) -> Result<(), GenerationError> {
    match history.last() {
        Some(turn) if turn.speaker() != Speaker::Seeker => Err(GenerationError::History),
        _ => Ok(()),
    }
}

fn single_shot(backend: &dyn ChatBackend, history: &[Turn], regime: Regime, cfg: &GenerationConfig) -> Result<GeneratedUtterance, GenerationError> {
    check_history(history)?;
    let prompt = render_prompt(regime, cfg.reasoning, &format_context(history, &[]))?;
    let mut raw = Vec::new();
    let step = complete_parsed(backend, &prompt, regime, cfg, &mut raw, &[])?;
    Ok(GeneratedUtterance {
        pairs: step.answer.pairs(),
        regime,
        steps_used: 1,
        stop_reason: StopReason::SingleShot,
        raw,
        chain: step.chain,
        diagnostics: step.diagnostics,
    })
}

/// All pairs in one completion.
pub fn generate_aio(backend: &dyn ChatBackend, history: &[Turn], cfg: &GenerationConfig) -> Result<GeneratedUtterance, GenerationError> {
    single_shot(backend, history, Regime::Aio, cfg)
}

/// A single strategy-response pair.
pub fn generate_single(backend: &dyn ChatBackend, history: &[Turn], cfg: &GenerationConfig) -> Result<GeneratedUtterance, GenerationError> {
    let cfg = GenerationConfig {
        reasoning: false,
        ..*cfg
    };
    single_shot(backend, history, Regime::Single, &cfg)
}

/// One pair per completion until the model clears `continue_reply` or the cap is hit.
pub fn generate_obo(backend: &dyn ChatBackend, history: &[Turn], cfg: &GenerationConfig) -> Result<GeneratedUtterance, GenerationError> {
    check_history(history)?;
    if cfg.max_steps == 0 {
        return Err(GenerationError::Steps);
    }
    let mut pairs = Vec::new();
    let mut raw = Vec::new();
    let mut chain = None;
    let mut diagnostics = Vec::new();
    loop {
        let prompt = render_prompt(Regime::Obo, cfg.reasoning, &format_context(history, &pairs))?;
        let step = complete_parsed(backend, &prompt, Regime::Obo, cfg, &mut raw, &pairs)?;
        if pairs.is_empty() {
            chain = step.chain;
        }
        diagnostics.extend(step.diagnostics);
        let more = step.answer.continue_reply().unwrap_or(false);
        pairs.extend(step.answer.pairs());
        let stop_reason = if !more {
            StopReason::Flag
        } else if pairs.len() >= cfg.max_steps {
            StopReason::Cap
        } else {
            continue;
        };
        return Ok(GeneratedUtterance {
            steps_used: pairs.len(),
            pairs,
            regime: Regime::Obo,
            stop_reason,
            raw,
            chain,
            diagnostics,
        });
    }
}

pub fn generate(backend: &dyn ChatBackend, regime: Regime, history: &[Turn], cfg: &GenerationConfig) -> Result<GeneratedUtterance, GenerationError> {
    match regime {
        Regime::Single => generate_single(backend, history, cfg),
        Regime::Aio => generate_aio(backend, history, cfg),
        Regime::Obo => generate_obo(backend, history, cfg),
    }
}

/// A supporter turn to evaluate: dialogue position within the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EvalTarget {
    pub dialogue: usize,
    pub turn_index: usize,
}

/// Every supporter turn in `split`, in corpus order.
pub fn eval_targets(corpus: &Corpus, split: Split) -> Vec<EvalTarget> {
    let mut out = Vec::new();
    for (d, dialogue) in corpus.dialogues.iter().enumerate() {
        if dialogue.split != split {
            continue;
        }
        for (turn_index, _) in dialogue.supporter_turns() {
            out.push(EvalTarget { dialogue: d, turn_index });
        }
    }
    out
}

/// Persisted outcome for one evaluated turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub pred_pairs: Vec<StrategyResponse>,
    pub ref_pairs: Vec<StrategyResponse>,
    pub raw: Vec<String>,
    pub diagnostics: Vec<Salvage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ReasoningChain>,
    /// Set when generation failed; the prediction then scores as empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Generates from gold history for one turn. Malformed generations become a
/// failed item; backend errors propagate.
pub fn eval_turn(
    backend: &dyn ChatBackend,
    corpus: &Corpus,
    target: EvalTarget,
    regime: Regime,
    cfg: &GenerationConfig,
) -> Result<EvalItem, GenerationError> {
    let dialogue = &corpus.dialogues[target.dialogue];
    let history = &dialogue.turns[..target.turn_index];
    let ref_pairs = dialogue.turns[target.turn_index].pairs().to_vec();
    let mut item = EvalItem {
        dialogue_id: dialogue.id.clone(),
        turn_index: target.turn_index,
        pred_pairs: Vec::new(),
        ref_pairs,
        raw: Vec::new(),
        diagnostics: Vec::new(),
        stop_reason: None,
        chain: None,
        error: None,
    };
    match generate(backend, regime, history, cfg) {
        Ok(g) => {
            item.pred_pairs = g.pairs;
            item.raw = g.raw;
            item.diagnostics = g.diagnostics;
            item.stop_reason = Some(g.stop_reason);
            item.chain = g.chain;
        }
        Err(GenerationError::Unparseable { last, raw, .. }) => {
            item.raw = raw;
            item.error = Some(last.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(item)
}

/// Metric report over items, reduced in (dialogue_id, turn_index) order.
pub fn report_from_items(items: &[EvalItem], bleu_opts: BleuOptions) -> Result<MetricReport, MetricError> {
    let mut sorted: Vec<&EvalItem> = items.iter().collect();
    sorted.sort_by(|a, b| (a.dialogue_id.as_str(), a.turn_index).cmp(&(b.dialogue_id.as_str(), b.turn_index)));
    let preds: Vec<Utterance> = sorted.iter().map(|i| Utterance::from_pairs(&i.pred_pairs)).collect();
    let refs: Vec<Utterance> = sorted.iter().map(|i| Utterance::from_pairs(&i.ref_pairs)).collect();
    metric_report(&preds, &refs, bleu_opts)
}

/// Sequential utterance-level evaluation over a split.
pub fn eval_utterance_level(
    backend: &dyn ChatBackend,
    corpus: &Corpus,
    split: Split,
    regime: Regime,
    cfg: &GenerationConfig,
    bleu_opts: BleuOptions,
) -> Result<(MetricReport, Vec<EvalItem>), EvalError> {
    let items = eval_targets(corpus, split)
        .into_iter()
        .map(|t| eval_turn(backend, corpus, t, regime, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let report = report_from_items(&items, bleu_opts)?;
    Ok((report, items))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// The output a perfect model would emit for `pairs` (step `step` for One-by-One).
pub fn reference_output(pairs: &[StrategyResponse], regime: Regime, step: usize) -> String {
    use crate::parse::{serialize_aio, serialize_obo, serialize_single};
    match regime {
        Regime::Aio => serialize_aio(pairs),
        Regime::Single => serialize_single(&StrategyResponse {
            strategy: pairs[0].strategy,
            text: crate::corpus::join_texts(pairs),
        }),
        Regime::Obo => serialize_obo(&pairs[step], step + 1 < pairs.len()),
    }
}
