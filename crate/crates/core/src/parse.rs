//! Parsing of supporter model outputs.
//!
//! Strict mode accepts exactly the target formats and is what the format
//! reward checks. Lenient mode applies a closed set of salvage rules and
//! reports each one it used:
//!
//! * strip a Markdown code fence,
//! * take the first well-formed embedded list or object,
//! * treat a lone object as a one-element All-in-One list,
//! * strip square brackets around a strategy name,
//! * accept `"true"` / `"false"` strings for `continue_reply`,
//! * for reasoned outputs, tolerate missing or malformed think/answer tags.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::StrategyResponse;
use crate::reasoning::{parse_think_body, NodeError, ReasoningChain};
use crate::strategy::StrategyLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Strict,
    Lenient,
}

/// Generation regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Single,
    Aio,
    Obo,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Single => "single",
            Regime::Aio => "aio",
            Regime::Obo => "obo",
        }
    }

    pub fn parse(s: &str) -> Option<Regime> {
        match s {
            "single" => Some(Regime::Single),
            "aio" => Some(Regime::Aio),
            "obo" => Some(Regime::Obo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AioOutput {
    pub pairs: Vec<StrategyResponse>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OboStep {
    pub pair: StrategyResponse,
    pub continue_reply: bool,
}

/// A parsed answer of any regime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "regime")]
pub enum Parsed {
    Single { pair: StrategyResponse },
    Aio { pairs: Vec<StrategyResponse> },
    Obo { step: OboStep },
}

impl Parsed {
    pub fn pairs(&self) -> Vec<StrategyResponse> {
        match self {
            Parsed::Single { pair } => vec![pair.clone()],
            Parsed::Aio { pairs } => pairs.clone(),
            Parsed::Obo { step } => vec![step.pair.clone()],
        }
    }

    pub fn strategies(&self) -> Vec<StrategyLabel> {
        match self {
            Parsed::Single { pair } => vec![pair.strategy],
            Parsed::Aio { pairs } => pairs.iter().map(|p| p.strategy).collect(),
            Parsed::Obo { step } => vec![step.pair.strategy],
        }
    }

    pub fn continue_reply(&self) -> Option<bool> {
        match self {
            Parsed::Obo { step } => Some(step.continue_reply),
            _ => None,
        }
    }
}

/// Parsed reasoned output: the chain (always present in strict mode) and the answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reasoned {
    pub chain: Option<ReasoningChain>,
    pub answer: Parsed,
}

/// A salvage step applied by lenient parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Salvage {
    CodeFence,
    Embedded { offset: usize },
    SingleObjectAsList,
    BracketedStrategy { index: usize, raw: String },
    StringBoolean { raw: String },
    MissingThink,
    MalformedThink { reason: String },
    MissingAnswerTags,
    UnclosedAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome<T> {
    pub mode: Mode,
    pub value: T,
    pub diagnostics: Vec<Salvage>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    /// Strict-mode structural violation (format reward 0).
    #[error("format error: {0}")]
    Format(String),
    #[error("non-canonical strategy {0:?}")]
    Strategy(String),
    #[error("nothing parseable in output")]
    Unparseable,
}

fn format_err(msg: impl Into<String>) -> ParseError {
    ParseError::Format(msg.into())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrictPair {
    strategy: String,
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrictStep {
    strategy: String,
    text: String,
    continue_reply: bool,
}

fn strategy_of(raw: &str, mode: Mode, index: usize, diags: &mut Vec<Salvage>) -> Result<StrategyLabel, ParseError> {
    if let Ok(label) = raw.parse() {
        return Ok(label);
    }
    let inner = raw.strip_prefix('[').and_then(|s| s.strip_suffix(']'));
    match inner.and_then(|s| s.parse::<StrategyLabel>().ok()) {
        Some(label) => match mode {
            Mode::Strict => Err(format_err("strategy wrapped in square brackets")),
            Mode::Lenient => {
                diags.push(Salvage::BracketedStrategy {
                    index,
                    raw: raw.to_string(),
                });
                Ok(label)
            }
        },
        None => Err(ParseError::Strategy(raw.to_string())),
    }
}

fn make_pair(strategy: StrategyLabel, text: String) -> Result<StrategyResponse, ParseError> {
    StrategyResponse::new(strategy, text).map_err(|_| format_err("empty text"))
}

fn json_err(e: serde_json::Error) -> ParseError {
    format_err(e.to_string())
}

fn strict_aio(text: &str) -> Result<AioOutput, ParseError> {
    let raw: Vec<StrictPair> = serde_json::from_str(text.trim()).map_err(json_err)?;
    if raw.is_empty() {
        return Err(format_err("empty strategy list"));
    }
    let mut pairs = Vec::with_capacity(raw.len());
    for (i, p) in raw.into_iter().enumerate() {
        let strategy = strategy_of(&p.strategy, Mode::Strict, i, &mut Vec::new())?;
        pairs.push(make_pair(strategy, p.text)?);
    }
    Ok(AioOutput { pairs })
}

fn strict_obo(text: &str) -> Result<OboStep, ParseError> {
    let raw: StrictStep = serde_json::from_str(text.trim()).map_err(json_err)?;
    let strategy = strategy_of(&raw.strategy, Mode::Strict, 0, &mut Vec::new())?;
    Ok(OboStep {
        pair: make_pair(strategy, raw.text)?,
        continue_reply: raw.continue_reply,
    })
}

fn strict_single(text: &str) -> Result<StrategyResponse, ParseError> {
    let raw: StrictPair = serde_json::from_str(text.trim()).map_err(json_err)?;
    let strategy = strategy_of(&raw.strategy, Mode::Strict, 0, &mut Vec::new())?;
    make_pair(strategy, raw.text)
}

fn has_exact_keys(obj: &Map<String, Value>, keys: &[&str]) -> bool {
    obj.len() == keys.len() && keys.iter().all(|k| obj.contains_key(*k))
}

fn lenient_pair(value: &Value, index: usize, diags: &mut Vec<Salvage>) -> Result<StrategyResponse, ParseError> {
    let obj = value.as_object().ok_or(ParseError::Unparseable)?;
    if !has_exact_keys(obj, &["strategy", "text"]) {
        return Err(ParseError::Unparseable);
    }
    let raw = obj["strategy"].as_str().ok_or(ParseError::Unparseable)?;
    let text = obj["text"].as_str().ok_or(ParseError::Unparseable)?;
    let strategy = strategy_of(raw, Mode::Lenient, index, diags)?;
    StrategyResponse::new(strategy, text).map_err(|_| ParseError::Unparseable)
}

fn lenient_aio(value: &Value, diags: &mut Vec<Salvage>) -> Result<AioOutput, ParseError> {
    match value {
        Value::Array(items) => {
            if items.is_empty() {
                return Err(ParseError::Unparseable);
            }
            let pairs = items
                .iter()
                .enumerate()
                .map(|(i, item)| lenient_pair(item, i, diags))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AioOutput { pairs })
        }
        Value::Object(_) => {
            let pair = lenient_pair(value, 0, diags)?;
            diags.push(Salvage::SingleObjectAsList);
            Ok(AioOutput { pairs: vec![pair] })
        }
        _ => Err(ParseError::Unparseable),
    }
}

fn lenient_obo(value: &Value, diags: &mut Vec<Salvage>) -> Result<OboStep, ParseError> {
    let obj = value.as_object().ok_or(ParseError::Unparseable)?;
    if !has_exact_keys(obj, &["strategy", "text", "continue_reply"]) {
        return Err(ParseError::Unparseable);
    }
    let continue_reply = match &obj["continue_reply"] {
        Value::Bool(b) => *b,
        Value::String(s) if s == "true" || s == "false" => {
            diags.push(Salvage::StringBoolean { raw: s.clone() });
            s == "true"
        }
        _ => return Err(ParseError::Unparseable),
    };
    let raw = obj["strategy"].as_str().ok_or(ParseError::Unparseable)?;
    let text = obj["text"].as_str().ok_or(ParseError::Unparseable)?;
    let strategy = strategy_of(raw, Mode::Lenient, 0, diags)?;
    let pair = StrategyResponse::new(strategy, text).map_err(|_| ParseError::Unparseable)?;
    Ok(OboStep { pair, continue_reply })
}

fn lenient_single(value: &Value, diags: &mut Vec<Salvage>) -> Result<StrategyResponse, ParseError> {
    if !value.is_object() {
        return Err(ParseError::Unparseable);
    }
    lenient_pair(value, 0, diags)
}

/// Returns the body of the first Markdown code fence, if any.
pub(crate) fn strip_code_fence(text: &str) -> (&str, bool) {
    let Some(open) = text.find("```") else {
        return (text, false);
    };
    let after = &text[open + 3..];
    // Skip an info string such as `json` up to the end of the fence line.
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => (&body[..close], true),
        None => (text, false),
    }
}

/// Finds the first well-formed JSON list or object embedded in `text` that
/// satisfies `accept`, returning it with its byte offset.
pub(crate) fn extract_embedded(text: &str, accept: impl Fn(&Value) -> bool) -> Option<(Value, usize)> {
    candidates(text).find(|(v, _, _)| accept(v)).map(|(v, off, _)| (v, off))
}

/// Every well-formed list or object starting at a bracket, in text order,
/// with its offset and whether it spans the whole (trimmed) text.
fn candidates(text: &str) -> impl Iterator<Item = (Value, usize, bool)> + '_ {
    text.char_indices()
        .filter(|(_, c)| *c == '[' || *c == '{')
        .filter_map(move |(pos, _)| {
            let mut stream = serde_json::Deserializer::from_str(&text[pos..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(value)) if value.is_array() || value.is_object() => {
                    let end = pos + stream.byte_offset();
                    let whole = text[..pos].trim().is_empty() && text[end..].trim().is_empty();
                    Some((value, pos, whole))
                }
                _ => None,
            }
        })
}

fn parse_with<T>(
    text: &str,
    mode: Mode,
    strict: fn(&str) -> Result<T, ParseError>,
    lenient: fn(&Value, &mut Vec<Salvage>) -> Result<T, ParseError>,
) -> Result<ParseOutcome<T>, ParseError> {
    match strict(text) {
        Ok(value) => {
            return Ok(ParseOutcome {
                mode,
                value,
                diagnostics: Vec::new(),
            })
        }
        Err(e) if mode == Mode::Strict => return Err(e),
        Err(_) => {}
    }
    let (body, fenced) = strip_code_fence(text);
    let mut first_strategy_error = None;
    for (value, offset, whole) in candidates(body) {
        let mut diags = Vec::new();
        if fenced {
            diags.push(Salvage::CodeFence);
        }
        if !whole {
            diags.push(Salvage::Embedded { offset });
        }
        match lenient(&value, &mut diags) {
            Ok(value) => {
                return Ok(ParseOutcome {
                    mode,
                    value,
                    diagnostics: diags,
                })
            }
            Err(e @ ParseError::Strategy(_)) => {
                first_strategy_error.get_or_insert(e);
            }
            Err(_) => {}
        }
    }
    Err(first_strategy_error.unwrap_or(ParseError::Unparseable))
}

/// Parses an All-in-One output: a list of `{strategy, text}` objects.
pub fn parse_aio(text: &str, mode: Mode) -> Result<ParseOutcome<AioOutput>, ParseError> {
    parse_with(text, mode, strict_aio, lenient_aio)
}

/// Parses a One-by-One step: a single `{strategy, text, continue_reply}` object.
pub fn parse_obo(text: &str, mode: Mode) -> Result<ParseOutcome<OboStep>, ParseError> {
    parse_with(text, mode, strict_obo, lenient_obo)
}

/// Parses a Single-Strategy output: a single `{strategy, text}` object.
pub fn parse_single(text: &str, mode: Mode) -> Result<ParseOutcome<StrategyResponse>, ParseError> {
    parse_with(text, mode, strict_single, lenient_single)
}

/// Parses an unwrapped answer of the given regime.
pub fn parse_answer(text: &str, regime: Regime, mode: Mode) -> Result<ParseOutcome<Parsed>, ParseError> {
    fn lift<T>(o: ParseOutcome<T>, f: impl FnOnce(T) -> Parsed) -> ParseOutcome<Parsed> {
        ParseOutcome {
            mode: o.mode,
            value: f(o.value),
            diagnostics: o.diagnostics,
        }
    }
    Ok(match regime {
        Regime::Single => lift(parse_single(text, mode)?, |pair| Parsed::Single { pair }),
        Regime::Aio => lift(parse_aio(text, mode)?, |o| Parsed::Aio { pairs: o.pairs }),
        Regime::Obo => lift(parse_obo(text, mode)?, |step| Parsed::Obo { step }),
    })
}

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

fn node_error_message(e: NodeError) -> String {
    match e {
        NodeError::Missing(n) => alloc::format!("think block is missing node [{n}]"),
        NodeError::Duplicated(n) => alloc::format!("think block repeats node [{n}]"),
        NodeError::OutOfOrder(n) => alloc::format!("node [{n}] is out of order"),
        NodeError::Empty(n) => alloc::format!("node [{n}] is empty"),
        NodeError::Preamble => "text before [Context] in think block".to_string(),
    }
}

fn strict_reasoned(text: &str, regime: Regime) -> Result<Reasoned, ParseError> {
    let t = text.trim();
    for tag in [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE] {
        let n = t.matches(tag).count();
        if n != 1 {
            return Err(format_err(alloc::format!("expected exactly one {tag}, found {n}")));
        }
    }
    if !t.starts_with(THINK_OPEN) {
        return Err(format_err("output must begin with <think>"));
    }
    if !t.ends_with(ANSWER_CLOSE) {
        return Err(format_err("output must end with </answer>"));
    }
    let think_close = t.find(THINK_CLOSE).unwrap();
    let answer_open = t.find(ANSWER_OPEN).unwrap();
    if answer_open < think_close {
        return Err(format_err("answer block precedes the end of the think block"));
    }
    if !t[think_close + THINK_CLOSE.len()..answer_open].trim().is_empty() {
        return Err(format_err("text between </think> and <answer>"));
    }
    let body = &t[THINK_OPEN.len()..think_close];
    let chain = parse_think_body(body).map_err(|e| format_err(node_error_message(e)))?;
    let inner = &t[answer_open + ANSWER_OPEN.len()..t.len() - ANSWER_CLOSE.len()];
    let answer = parse_answer(inner, regime, Mode::Strict)?.value;
    Ok(Reasoned {
        chain: Some(chain),
        answer,
    })
}

/// Parses a reasoning-wrapped output `<think> ... </think> <answer> ... </answer>`.
pub fn parse_reasoned(text: &str, regime: Regime, mode: Mode) -> Result<ParseOutcome<Reasoned>, ParseError> {
    match strict_reasoned(text, regime) {
        Ok(value) => {
            return Ok(ParseOutcome {
                mode,
                value,
                diagnostics: Vec::new(),
            })
        }
        Err(e) if mode == Mode::Strict => return Err(e),
        Err(_) => {}
    }

    let mut diagnostics = Vec::new();
    let think = text.find(THINK_OPEN).and_then(|open| {
        let body_start = open + THINK_OPEN.len();
        text[body_start..]
            .find(THINK_CLOSE)
            .map(|close| (&text[body_start..body_start + close], body_start + close + THINK_CLOSE.len()))
    });
    let chain = match think {
        Some((body, _)) => match parse_think_body(body) {
            Ok(chain) => Some(chain),
            Err(e) => {
                diagnostics.push(Salvage::MalformedThink {
                    reason: node_error_message(e),
                });
                None
            }
        },
        None => {
            diagnostics.push(Salvage::MissingThink);
            None
        }
    };
    let after_think = think.map(|(_, end)| end).unwrap_or(0);
    let rest = &text[after_think..];
    let inner = match rest.find(ANSWER_OPEN) {
        Some(open) => {
            let body = &rest[open + ANSWER_OPEN.len()..];
            match body.find(ANSWER_CLOSE) {
                Some(close) => &body[..close],
                None => {
                    diagnostics.push(Salvage::UnclosedAnswer);
                    body
                }
            }
        }
        None => {
            diagnostics.push(Salvage::MissingAnswerTags);
            rest
        }
    };
    let answer = parse_answer(inner, regime, Mode::Lenient)?;
    diagnostics.extend(answer.diagnostics);
    Ok(ParseOutcome {
        mode,
        value: Reasoned {
            chain,
            answer: answer.value,
        },
        diagnostics,
    })
}

/// Serializes pairs in the All-in-One target format.
pub fn serialize_aio(pairs: &[StrategyResponse]) -> String {
    serde_json::to_string(pairs).expect("pairs serialize")
}

/// Serializes a One-by-One step target.
pub fn serialize_obo(pair: &StrategyResponse, continue_reply: bool) -> String {
    #[derive(Serialize)]
    struct Step<'a> {
        strategy: StrategyLabel,
        text: &'a str,
        continue_reply: bool,
    }
    serde_json::to_string(&Step {
        strategy: pair.strategy,
        text: &pair.text,
        continue_reply,
    })
    .expect("step serializes")
}

/// Serializes a Single-Strategy target.
pub fn serialize_single(pair: &StrategyResponse) -> String {
    serde_json::to_string(pair).expect("pair serializes")
}

/// Wraps an answer with a reasoning chain.
pub fn serialize_reasoned(chain: &ReasoningChain, answer: &str) -> String {
    alloc::format!(
        "{THINK_OPEN} {} {THINK_CLOSE} {ANSWER_OPEN} {answer}{ANSWER_CLOSE}",
        chain.to_think_body()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(text: &str) -> StrategyResponse {
        StrategyResponse::new(StrategyLabel::Question, text).unwrap()
    }

    #[test]
    fn canonical_aio_strict() {
        let out = parse_aio(r#"[{"strategy":"Question","text":"How long?"}]"#, Mode::Strict).unwrap();
        assert_eq!(out.value.pairs, vec![q("How long?")]);
        assert!(out.diagnostics.is_empty());
    }

    #[test]
    fn pretty_printed_aio_is_strict_valid() {
        let text = "[\n    {\n        \"strategy\": \"Question\",\n        \"text\": \"x\"\n    }\n]\n";
        assert!(parse_aio(text, Mode::Strict).is_ok());
    }

    #[test]
    fn prose_and_brackets_need_lenient_mode() {
        let text = r#"Here you go: [{"strategy":"[Question]","text":"x"}]"#;
        assert!(matches!(parse_aio(text, Mode::Strict), Err(ParseError::Format(_))));
        let out = parse_aio(text, Mode::Lenient).unwrap();
        assert_eq!(out.value.pairs, vec![q("x")]);
        assert_eq!(
            out.diagnostics,
            vec![
                Salvage::Embedded { offset: 13 },
                Salvage::BracketedStrategy {
                    index: 0,
                    raw: "[Question]".into()
                }
            ]
        );
        let bare = r#"[{"strategy":"[Question]","text":"x"}]"#;
        assert!(matches!(parse_aio(bare, Mode::Strict), Err(ParseError::Format(_))));
    }

    #[test]
    fn unknown_strategy_fails_in_both_modes() {
        let text = r#"[{"strategy":"Empathy","text":"x"}]"#;
        assert_eq!(parse_aio(text, Mode::Strict), Err(ParseError::Strategy("Empathy".into())));
        assert_eq!(parse_aio(text, Mode::Lenient), Err(ParseError::Strategy("Empathy".into())));
    }

    #[test]
    fn strict_aio_rejects_shape_violations() {
        for bad in [
            "[]",
            r#"{"strategy":"Question","text":"x"}"#,
            r#"[{"strategy":"Question","text":"x","extra":1}]"#,
            r#"[{"strategy":"Question"}]"#,
            r#"[{"strategy":"Question","text":"   "}]"#,
            r#"[{"strategy":"Question","text":"x","text":"y"}]"#,
            r#"[{"strategy":"Question","text":"x"}] trailing"#,
            "```json\n[{\"strategy\":\"Question\",\"text\":\"x\"}]\n```",
        ] {
            assert!(
                matches!(parse_aio(bad, Mode::Strict), Err(ParseError::Format(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn lenient_aio_salvages_fences_and_single_objects() {
        let out = parse_aio("```json\n[{\"strategy\":\"Question\",\"text\":\"x\"}]\n```", Mode::Lenient).unwrap();
        assert_eq!(out.diagnostics, vec![Salvage::CodeFence]);
        let out = parse_aio(r#"{"strategy":"Question","text":"x"}"#, Mode::Lenient).unwrap();
        assert_eq!(out.value.pairs.len(), 1);
        assert_eq!(out.diagnostics, vec![Salvage::SingleObjectAsList]);
        assert_eq!(parse_aio("no json here", Mode::Lenient), Err(ParseError::Unparseable));
    }

    #[test]
    fn obo_strict_and_string_booleans() {
        let out = parse_obo(r#"{"strategy":"Information","text":"y","continue_reply":false}"#, Mode::Strict).unwrap();
        assert_eq!(out.value.pair.strategy, StrategyLabel::Information);
        assert!(!out.value.continue_reply);

        let missing = r#"{"strategy":"Information","text":"y"}"#;
        assert!(matches!(parse_obo(missing, Mode::Strict), Err(ParseError::Format(_))));

        let stringly = r#"{"strategy":"Question","text":"?","continue_reply":"true"}"#;
        assert!(matches!(parse_obo(stringly, Mode::Strict), Err(ParseError::Format(_))));
        let out = parse_obo(stringly, Mode::Lenient).unwrap();
        assert!(out.value.continue_reply);
        assert_eq!(out.diagnostics, vec![Salvage::StringBoolean { raw: "true".into() }]);
    }

    #[test]
    fn single_rejects_lists_and_empty_text() {
        assert!(parse_single(r#"{"strategy":"Others","text":"ok"}"#, Mode::Strict).is_ok());
        assert!(matches!(
            parse_single(r#"[{"strategy":"Others","text":"ok"}]"#, Mode::Strict),
            Err(ParseError::Format(_))
        ));
        assert!(parse_single(r#"{"strategy":"Others","text":""}"#, Mode::Strict).is_err());
        assert!(parse_single(r#"{"strategy":"Others","text":""}"#, Mode::Lenient).is_err());
    }

    fn chain() -> ReasoningChain {
        ReasoningChain {
            context: "The seeker lost a job.".into(),
            cognition: "The seeker thinks it is hopeless.".into(),
            emotion: "The seeker is anxious.".into(),
            support_plan: "Step 1: Using [Question] to probe.".into(),
        }
    }

    #[test]
    fn reasoned_round_trip() {
        let answer = serialize_aio(&[q("a"), q("b")]);
        let text = serialize_reasoned(&chain(), &answer);
        assert!(text.starts_with("<think> [Context]: The seeker lost a job.\n[Cognition]:"));
        assert!(text.ends_with(&alloc::format!("</think> <answer> {answer}</answer>")));
        let out = parse_reasoned(&text, Regime::Aio, Mode::Strict).unwrap();
        assert_eq!(out.value.chain, Some(chain()));
        assert_eq!(out.value.answer.strategies(), vec![StrategyLabel::Question; 2]);
    }

    #[test]
    fn reasoned_strict_errors() {
        let answer = serialize_aio(&[q("a")]);
        let swapped = alloc::format!("<answer> {answer}</answer> <think> {} </think>", chain().to_think_body());
        assert!(matches!(parse_reasoned(&swapped, Regime::Aio, Mode::Strict), Err(ParseError::Format(_))));

        let no_emotion = "<think> [Context]: a\n[Cognition]: b\n[Support Plan]: d </think> <answer> [{\"strategy\":\"Question\",\"text\":\"a\"}]</answer>";
        match parse_reasoned(no_emotion, Regime::Aio, Mode::Strict) {
            Err(ParseError::Format(msg)) => assert!(msg.contains("[Emotion]"), "{msg}"),
            other => panic!("{other:?}"),
        }

        let doubled = alloc::format!("{0}{0}", serialize_reasoned(&chain(), &answer));
        assert!(parse_reasoned(&doubled, Regime::Aio, Mode::Strict).is_err());
        assert!(parse_reasoned(&answer, Regime::Aio, Mode::Strict).is_err());
    }

    #[test]
    fn reasoned_lenient_salvages_bare_answers() {
        let answer = serialize_aio(&[q("a")]);
        let out = parse_reasoned(&answer, Regime::Aio, Mode::Lenient).unwrap();
        assert_eq!(out.value.chain, None);
        assert_eq!(out.diagnostics, vec![Salvage::MissingThink, Salvage::MissingAnswerTags]);
        let text = alloc::format!("<think> {} </think>\n<answer>\n{answer}", chain().to_think_body());
        let out = parse_reasoned(&text, Regime::Aio, Mode::Lenient).unwrap();
        assert_eq!(out.value.chain, Some(chain()));
        assert_eq!(out.diagnostics, vec![Salvage::UnclosedAnswer]);
    }

    #[test]
    fn serializers_round_trip() {
        let step = serialize_obo(&q("x"), true);
        assert_eq!(step, r#"{"strategy":"Question","text":"x","continue_reply":true}"#);
        assert!(parse_obo(&step, Mode::Strict).unwrap().value.continue_reply);
        assert_eq!(serialize_single(&q("x")), r#"{"strategy":"Question","text":"x"}"#);
    }
}
