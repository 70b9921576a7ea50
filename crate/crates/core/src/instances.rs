//! Training instance builders for the three regimes, reasoning wrapping,
//! distillation requests and the RL subset.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{join_texts, Corpus, Dialogue, StrategyResponse};
use crate::parse::{serialize_aio, serialize_obo, serialize_reasoned, serialize_single, Regime};
use crate::prompts::{format_context, format_tagged_reply, render, Bindings, RenderError, TemplateId};
use crate::reasoning::{parse_chain, ChainError, ReasoningChain};
use crate::reward::Method;
use crate::strategy::StrategyLabel;

/// Published size of the All-in-One RL subset.
pub const DEFAULT_RL_TOTAL: usize = 3_696;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub regime: Regime,
    pub reasoning: bool,
    /// Serialized dialogue history the prompt was rendered from.
    pub context: String,
    pub prompt: String,
    pub target: String,
    pub dialogue_id: String,
    pub turn_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<usize>,
    pub ref_strategies: Vec<StrategyLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_flag: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstanceError {
    #[error("invalid reasoning chain: {0}")]
    Chain(#[from] ChainError),
    #[error("the single-strategy regime has no reasoning variant")]
    NoReasoningTemplate,
    #[error("instance {0} is already reasoning-wrapped")]
    AlreadyWrapped(String),
    #[error("RL target {target} is below the {multi} multi-strategy instances")]
    TargetTooSmall { target: usize, multi: usize },
    #[error("RL target {target} exceeds the {total} available instances")]
    TargetTooLarge { target: usize, total: usize },
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Stable key `dialogue_id:turn_index[:step_index]`.
pub fn instance_key(dialogue_id: &str, turn_index: usize, step_index: Option<usize>) -> String {
    match step_index {
        Some(step) => alloc::format!("{dialogue_id}:{turn_index}:{step}"),
        None => alloc::format!("{dialogue_id}:{turn_index}"),
    }
}

/// Template used to prompt a supporter model.
pub fn generation_template(regime: Regime, reasoning: bool) -> Result<TemplateId, InstanceError> {
    Ok(match (regime, reasoning) {
        (Regime::Single, false) => TemplateId::SingleStrategy,
        (Regime::Single, true) => return Err(InstanceError::NoReasoningTemplate),
        (Regime::Aio, false) => TemplateId::AllInOne,
        (Regime::Aio, true) => TemplateId::AllInOneReasoning,
        (Regime::Obo, false) => TemplateId::OneByOne,
        (Regime::Obo, true) => TemplateId::OneByOneReasoning,
    })
}

/// Renders the supporter prompt for a serialized context.
pub fn render_prompt(regime: Regime, reasoning: bool, context: &str) -> Result<String, InstanceError> {
    let template = generation_template(regime, reasoning)?;
    Ok(render(template, &Bindings::new().with("context", context))?)
}

impl TrainingInstance {
    pub fn key(&self) -> String {
        instance_key(&self.dialogue_id, self.turn_index, self.step_index)
    }

    pub fn is_multi_strategy(&self) -> bool {
        self.ref_strategies.len() >= 2
    }

    /// One chat-tuning record: `{messages, target, metadata}`.
    pub fn to_record(&self) -> Value {
        json!({
            "messages": [{"role": "user", "content": self.prompt}],
            "target": self.target,
            "metadata": {
                "key": self.key(),
                "regime": self.regime,
                "reasoning": self.reasoning,
                "dialogue_id": self.dialogue_id,
                "turn_index": self.turn_index,
                "step_index": self.step_index,
                "ref_strategies": self.ref_strategies,
                "ref_flag": self.ref_flag,
            }
        })
    }
}

fn turn_contexts(dialogue: &Dialogue) -> impl Iterator<Item = (usize, &[StrategyResponse], &[crate::corpus::Turn])> {
    dialogue
        .supporter_turns()
        .map(move |(idx, pairs)| (idx, pairs, &dialogue.turns[..idx]))
}

#[allow(clippy::too_many_arguments)]
fn instance(
    regime: Regime,
    dialogue: &Dialogue,
    turn_index: usize,
    step_index: Option<usize>,
    context: String,
    target: String,
    ref_strategies: Vec<StrategyLabel>,
    ref_flag: Option<bool>,
) -> TrainingInstance {
    let prompt = render_prompt(regime, false, &context).expect("non-reasoning templates bind only context");
    TrainingInstance {
        regime,
        reasoning: false,
        context,
        prompt,
        target,
        dialogue_id: dialogue.id.clone(),
        turn_index,
        step_index,
        ref_strategies,
        ref_flag,
    }
}

/// One instance per supporter turn: the first strategy with the full utterance text.
pub fn build_single(corpus: &Corpus) -> Vec<TrainingInstance> {
    let mut out = Vec::new();
    for dialogue in &corpus.dialogues {
        for (idx, pairs, history) in turn_contexts(dialogue) {
            let pair = StrategyResponse {
                strategy: pairs[0].strategy,
                text: join_texts(pairs),
            };
            let target = serialize_single(&pair);
            out.push(instance(
                Regime::Single,
                dialogue,
                idx,
                None,
                format_context(history, &[]),
                target,
                alloc::vec![pair.strategy],
                None,
            ));
        }
    }
    out
}

/// One instance per supporter turn with all pairs as an ordered list.
pub fn build_aio(corpus: &Corpus) -> Vec<TrainingInstance> {
    let mut out = Vec::new();
    for dialogue in &corpus.dialogues {
        for (idx, pairs, history) in turn_contexts(dialogue) {
            out.push(instance(
                Regime::Aio,
                dialogue,
                idx,
                None,
                format_context(history, &[]),
                serialize_aio(pairs),
                pairs.iter().map(|p| p.strategy).collect(),
                None,
            ));
        }
    }
    out
}

/// One instance per strategy-response pair, with earlier pairs of the turn as context.
pub fn build_obo(corpus: &Corpus) -> Vec<TrainingInstance> {
    let mut out = Vec::new();
    for dialogue in &corpus.dialogues {
        for (idx, pairs, history) in turn_contexts(dialogue) {
            for (step, pair) in pairs.iter().enumerate() {
                let more = step + 1 < pairs.len();
                out.push(instance(
                    Regime::Obo,
                    dialogue,
                    idx,
                    Some(step),
                    format_context(history, &pairs[..step]),
                    serialize_obo(pair, more),
                    alloc::vec![pair.strategy],
                    Some(more),
                ));
            }
        }
    }
    out
}

/// Prepends a validated reasoning chain to the target and switches to the reasoning prompt.
pub fn wrap_reasoning(instance: &TrainingInstance, chain: &ReasoningChain) -> Result<TrainingInstance, InstanceError> {
    if instance.reasoning {
        return Err(InstanceError::AlreadyWrapped(instance.key()));
    }
    chain.validate()?;
    let prompt = render_prompt(instance.regime, true, &instance.context)?;
    Ok(TrainingInstance {
        reasoning: true,
        prompt,
        target: serialize_reasoned(chain, &instance.target),
        ..instance.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillationRequest {
    pub key: String,
    pub prompt: String,
}

/// One teacher prompt per supporter turn (aio) or per pair step (obo).
pub fn build_distillation_requests(corpus: &Corpus, method: Method) -> Vec<DistillationRequest> {
    let mut out = Vec::new();
    for dialogue in &corpus.dialogues {
        for (idx, pairs, history) in turn_contexts(dialogue) {
            match method {
                Method::Aio => {
                    let bindings = Bindings::new()
                        .with("context", format_context(history, &[]))
                        .with("response", format_tagged_reply(pairs));
                    out.push(DistillationRequest {
                        key: instance_key(&dialogue.id, idx, None),
                        prompt: render(TemplateId::DistillAio, &bindings).expect("bindings complete"),
                    });
                }
                Method::Obo => {
                    for step in 0..pairs.len() {
                        let bindings = Bindings::new()
                            .with("context", format_context(history, &pairs[..step]))
                            .with("response", format_tagged_reply(&pairs[step..step + 1]));
                        out.push(DistillationRequest {
                            key: instance_key(&dialogue.id, idx, Some(step)),
                            prompt: render(TemplateId::DistillObo, &bindings).expect("bindings complete"),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Result of turning teacher responses into reasoned instances.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assembled {
    pub instances: Vec<TrainingInstance>,
    /// Teacher responses rejected by chain validation, with the reason.
    pub dropped: Vec<(String, InstanceError)>,
}

/// Wraps each instance once per valid teacher chain; invalid chains are dropped.
///
/// `responses` maps an instance key to raw teacher responses (one per teacher).
/// Output follows instance order, then response order.
pub fn assemble_reasoned(instances: &[TrainingInstance], responses: &BTreeMap<String, Vec<String>>) -> Assembled {
    let mut out = Assembled::default();
    for inst in instances {
        let key = inst.key();
        let Some(texts) = responses.get(&key) else {
            continue;
        };
        for text in texts {
            match parse_chain(text).map_err(InstanceError::from).and_then(|c| wrap_reasoning(inst, &c)) {
                Ok(wrapped) => out.instances.push(wrapped),
                Err(e) => out.dropped.push((key.clone(), e)),
            }
        }
    }
    out
}

/// Keeps every multi-strategy instance and a seeded uniform sample of
/// single-strategy instances, `target_total` in all.
pub fn downsample_rl(instances: &[TrainingInstance], target_total: usize, seed: u64) -> Result<Vec<TrainingInstance>, InstanceError> {
    let (multi, single): (Vec<&TrainingInstance>, Vec<&TrainingInstance>) =
        instances.iter().partition(|i| i.is_multi_strategy());
    if target_total < multi.len() {
        return Err(InstanceError::TargetTooSmall {
            target: target_total,
            multi: multi.len(),
        });
    }
    if target_total > instances.len() {
        return Err(InstanceError::TargetTooLarge {
            target: target_total,
            total: instances.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, single.len(), target_total - multi.len());
    let mut out: Vec<TrainingInstance> = multi.into_iter().cloned().collect();
    out.extend(picked.iter().map(|i| single[i].clone()));
    out.sort_by(|a, b| {
        (a.dialogue_id.as_str(), a.turn_index, a.step_index).cmp(&(b.dialogue_id.as_str(), b.turn_index, b.step_index))
    });
    Ok(out)
}

/// Canonical instance-file line for each instance, in input order.
pub fn to_jsonl(instances: &[TrainingInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&inst.to_record().to_string());
        out.push('\n');
    }
    out
}
