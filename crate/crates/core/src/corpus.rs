//! Dialogue data model, ESConv ingestion and corpus statistics.
//!
//! A supporter *utterance* is one supporter turn. Raw consecutive supporter
//! messages are merged into a single turn, and inside a merged turn adjacent
//! messages carrying the same strategy are coalesced into one pair. Consecutive
//! seeker messages are likewise merged into a single seeker turn.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::strategy::StrategyLabel;

/// A strategy together with the text segment realizing it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPair")]
pub struct StrategyResponse {
    pub strategy: StrategyLabel,
    pub text: String,
}

#[derive(Deserialize)]
struct RawPair {
    strategy: StrategyLabel,
    text: String,
}

impl TryFrom<RawPair> for StrategyResponse {
    type Error = EmptyText;

    fn try_from(raw: RawPair) -> Result<Self, Self::Error> {
        StrategyResponse::new(raw.strategy, raw.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("response text must contain a non-whitespace character")]
pub struct EmptyText;

impl StrategyResponse {
    pub fn new(strategy: StrategyLabel, text: impl Into<String>) -> Result<Self, EmptyText> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EmptyText);
        }
        Ok(Self { strategy, text })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Seeker,
    Supporter,
}

/// One turn of a dialogue. Supporter turns carry at least one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "speaker", rename_all = "lowercase")]
pub enum Turn {
    Seeker { text: String },
    Supporter { pairs: Vec<StrategyResponse> },
}

impl Turn {
    pub fn seeker(text: impl Into<String>) -> Self {
        Turn::Seeker { text: text.into() }
    }

    pub fn supporter(pairs: Vec<StrategyResponse>) -> Self {
        Turn::Supporter { pairs }
    }

    pub fn speaker(&self) -> Speaker {
        match self {
            Turn::Seeker { .. } => Speaker::Seeker,
            Turn::Supporter { .. } => Speaker::Supporter,
        }
    }

    /// Pairs of a supporter turn; empty for seeker turns.
    pub fn pairs(&self) -> &[StrategyResponse] {
        match self {
            Turn::Seeker { .. } => &[],
            Turn::Supporter { pairs } => pairs,
        }
    }

    /// Full text of the turn. Supporter pair texts are joined with one space.
    pub fn text(&self) -> String {
        match self {
            Turn::Seeker { text } => text.clone(),
            Turn::Supporter { pairs } => join_texts(pairs),
        }
    }
}

/// The canonical utterance text: pair texts joined by a single space.
pub fn join_texts(pairs: &[StrategyResponse]) -> String {
    let mut out = String::new();
    for (i, pair) in pairs.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&pair.text);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "validation" | "valid" | "dev" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub problem_type: String,
    pub emotion_type: String,
    pub situation: String,
    pub split: Split,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn supporter_turns(&self) -> impl Iterator<Item = (usize, &[StrategyResponse])> {
        self.turns.iter().enumerate().filter_map(|(i, t)| match t {
            Turn::Supporter { pairs } => Some((i, pairs.as_slice())),
            Turn::Seeker { .. } => None,
        })
    }

    /// Checks the structural invariants of a dialogue.
    pub fn validate(&self) -> Result<(), String> {
        for (i, turn) in self.turns.iter().enumerate() {
            match turn {
                Turn::Seeker { text } if text.trim().is_empty() => {
                    return Err(format!("turn {i}: seeker text is empty"));
                }
                Turn::Supporter { pairs } if pairs.is_empty() => {
                    return Err(format!("turn {i}: supporter turn has no pairs"));
                }
                _ => {}
            }
            if i > 0 && self.turns[i - 1].speaker() == turn.speaker() {
                return Err(format!("turn {i}: same speaker as previous turn"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn new(dialogues: Vec<Dialogue>) -> Self {
        Self { dialogues }
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Dialogue> {
        self.dialogues.iter().filter(move |d| d.split == split)
    }

    pub fn subset(&self, split: Split) -> Corpus {
        Corpus::new(self.in_split(split).cloned().collect())
    }

    pub fn supporter_turn_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.supporter_turns().count()).sum()
    }

    pub fn pair_count(&self) -> usize {
        self.dialogues
            .iter()
            .flat_map(|d| d.supporter_turns())
            .map(|(_, pairs)| pairs.len())
            .sum()
    }

    /// Canonical serialization: one dialogue object per line.
    pub fn to_canonical_jsonl(&self) -> String {
        let mut out = String::new();
        for dialogue in &self.dialogues {
            // Serializing plain strings, enums and vectors cannot fail.
            out.push_str(&serde_json::to_string(dialogue).expect("dialogue serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_canonical_jsonl(text: &str) -> Result<Corpus, CorpusError> {
        let mut dialogues = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let dialogue: Dialogue =
                serde_json::from_str(line).map_err(|e| CorpusError::Canonical {
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            dialogue.validate().map_err(|message| CorpusError::Canonical {
                line: lineno + 1,
                message,
            })?;
            dialogues.push(dialogue);
        }
        Ok(Corpus::new(dialogues))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus is not valid JSON: {0}")]
    Syntax(String),
    #[error("expected a top-level list of dialogue records")]
    NotAList,
    #[error("dialogue {index}: field `{field}`: {message}")]
    Malformed {
        index: usize,
        field: String,
        message: String,
    },
    #[error("dialogue {index}: unknown strategy {value:?}")]
    Strategy { index: usize, value: String },
    #[error("dialogue {index}: split assignment: {message}")]
    SplitAssignment { index: usize, message: String },
    #[error("line {line}: {message}")]
    Canonical { line: usize, message: String },
    #[error("corpus has no supporter turns")]
    NoSupporterTurns,
}

/// How dialogues of a raw ESConv release are assigned to splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitSpec {
    /// Every dialogue goes to the given split.
    Fixed(Split),
    /// Each record carries its own `"split"` field.
    Field,
    /// The first `train` records are train, the next `validation` are
    /// validation, the remainder is test.
    Contiguous { train: usize, validation: usize },
    /// 80% / 10% / 10% contiguous by file order (1,300 → 1,040 / 130 / 130).
    Proportional,
    /// Explicit dialogue id → split map; ids missing from the map are an error.
    Manifest(BTreeMap<String, Split>),
}

impl SplitSpec {
    fn assign(&self, index: usize, total: usize, id: &str, record: &Value) -> Result<Split, CorpusError> {
        let err = |message: String| CorpusError::SplitAssignment { index, message };
        match self {
            SplitSpec::Fixed(split) => Ok(*split),
            SplitSpec::Field => {
                let raw = record
                    .get("split")
                    .and_then(Value::as_str)
                    .ok_or_else(|| err("record has no string `split` field".to_string()))?;
                Split::parse(raw).ok_or_else(|| err(format!("unknown split {raw:?}")))
            }
            SplitSpec::Contiguous { train, validation } => Ok(contiguous(index, *train, *validation)),
            SplitSpec::Proportional => {
                let train = total * 8 / 10;
                let validation = total / 10;
                Ok(contiguous(index, train, validation))
            }
            SplitSpec::Manifest(map) => map
                .get(id)
                .copied()
                .ok_or_else(|| err(format!("dialogue id {id:?} missing from manifest"))),
        }
    }
}

fn contiguous(index: usize, train: usize, validation: usize) -> Split {
    if index < train {
        Split::Train
    } else if index < train + validation {
        Split::Validation
    } else {
        Split::Test
    }
}

/// Identifier given to the `index`-th record of a raw release file.
pub fn esconv_id(index: usize) -> String {
    format!("esconv-{index:04}")
}

/// Parses the ESConv release format: a top-level list of records, each with
/// `emotion_type`, `problem_type`, `situation` and a `dialog` message array
/// whose supporter messages carry `annotation.strategy`.
///
/// Whitespace-only input yields an empty corpus.
pub fn ingest_esconv(text: &str, split: &SplitSpec) -> Result<Corpus, CorpusError> {
    if text.trim().is_empty() {
        return Ok(Corpus::default());
    }
    let root: Value = serde_json::from_str(text).map_err(|e| CorpusError::Syntax(e.to_string()))?;
    let records = root.as_array().ok_or(CorpusError::NotAList)?;
    let total = records.len();
    let mut dialogues = Vec::with_capacity(total);
    for (index, record) in records.iter().enumerate() {
        dialogues.push(ingest_record(index, total, record, split)?);
    }
    Ok(Corpus::new(dialogues))
}

fn ingest_record(index: usize, total: usize, record: &Value, split: &SplitSpec) -> Result<Dialogue, CorpusError> {
    let malformed = |field: &str, message: &str| CorpusError::Malformed {
        index,
        field: field.to_string(),
        message: message.to_string(),
    };
    if !record.is_object() {
        return Err(malformed("<record>", "expected an object"));
    }
    let string_field = |name: &str| -> Result<String, CorpusError> {
        record
            .get(name)
            .and_then(Value::as_str)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| malformed(name, "missing or not a string"))
    };
    let problem_type = string_field("problem_type")?;
    let emotion_type = string_field("emotion_type")?;
    let situation = string_field("situation")?;
    let messages = record
        .get("dialog")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("dialog", "missing or not a list"))?;

    let mut turns: Vec<Turn> = Vec::new();
    for (m, message) in messages.iter().enumerate() {
        let field = |name: &str| format!("dialog[{m}].{name}");
        let speaker = message
            .get("speaker")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed(&field("speaker"), "missing or not a string"))?;
        let content = message
            .get("content")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed(&field("content"), "missing or not a string"))?;
        let content = content.trim();
        match speaker {
            "seeker" | "usr" => {
                if content.is_empty() {
                    continue;
                }
                match turns.last_mut() {
                    Some(Turn::Seeker { text }) => {
                        text.push(' ');
                        text.push_str(content);
                    }
                    _ => turns.push(Turn::seeker(content)),
                }
            }
            "supporter" | "sys" => {
                let raw = message
                    .get("annotation")
                    .and_then(|a| a.get("strategy"))
                    .and_then(Value::as_str)
                    .ok_or_else(|| malformed(&field("annotation.strategy"), "missing or not a string"))?;
                let strategy: StrategyLabel = raw.parse().map_err(|_| CorpusError::Strategy {
                    index,
                    value: raw.to_string(),
                })?;
                if content.is_empty() {
                    continue;
                }
                let pair = StrategyResponse {
                    strategy,
                    text: content.to_string(),
                };
                match turns.last_mut() {
                    Some(Turn::Supporter { pairs }) => push_coalescing(pairs, pair),
                    _ => turns.push(Turn::supporter(alloc::vec![pair])),
                }
            }
            other => {
                return Err(malformed(&field("speaker"), &format!("unknown speaker {other:?}")));
            }
        }
    }

    let id = record
        .get("id")
        .and_then(Value::as_str)
        .map(ToString::to_string)
        .unwrap_or_else(|| esconv_id(index));
    let split = split.assign(index, total, &id, record)?;
    Ok(Dialogue {
        id,
        problem_type,
        emotion_type,
        situation,
        split,
        turns,
    })
}

/// Appends a pair, merging it into the last one when the strategy repeats.
pub fn push_coalescing(pairs: &mut Vec<StrategyResponse>, pair: StrategyResponse) {
    match pairs.last_mut() {
        Some(last) if last.strategy == pair.strategy => {
            last.text.push(' ');
            last.text.push_str(&pair.text);
        }
        _ => pairs.push(pair),
    }
}

/// Strategy-count bucket of a supporter turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bucket {
    One,
    Two,
    Three,
    MoreThanThree,
}

impl Bucket {
    pub const ALL: [Bucket; 4] = [Bucket::One, Bucket::Two, Bucket::Three, Bucket::MoreThanThree];

    pub fn of(pair_count: usize) -> Bucket {
        match pair_count {
            0 | 1 => Bucket::One,
            2 => Bucket::Two,
            3 => Bucket::Three,
            _ => Bucket::MoreThanThree,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Bucket::One => "1",
            Bucket::Two => "2",
            Bucket::Three => "3",
            Bucket::MoreThanThree => ">3",
        }
    }
}

/// Supporter-utterance counts by strategy-count bucket and split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyCountTable {
    /// `counts[split][bucket]`
    pub counts: [[u64; 4]; 3],
}

impl StrategyCountTable {
    pub fn get(&self, split: Split, bucket: Bucket) -> u64 {
        self.counts[split as usize][bucket as usize]
    }

    pub fn split_total(&self, split: Split) -> u64 {
        self.counts[split as usize].iter().sum()
    }

    pub fn bucket_total(&self, bucket: Bucket) -> u64 {
        Split::ALL.iter().map(|s| self.get(*s, bucket)).sum()
    }

    pub fn total(&self) -> u64 {
        Split::ALL.iter().map(|s| self.split_total(*s)).sum()
    }

    /// Turns with two or more strategies in `split`.
    pub fn multi(&self, split: Split) -> u64 {
        self.split_total(split) - self.get(split, Bucket::One)
    }
}

pub fn strategy_count_table(corpus: &Corpus) -> StrategyCountTable {
    let mut table = StrategyCountTable::default();
    for dialogue in &corpus.dialogues {
        for (_, pairs) in dialogue.supporter_turns() {
            table.counts[dialogue.split as usize][Bucket::of(pairs.len()) as usize] += 1;
        }
    }
    table
}

/// Fraction of supporter turns that use two or more strategies.
pub fn multi_strategy_fraction(corpus: &Corpus) -> Result<f64, CorpusError> {
    let mut total = 0u64;
    let mut multi = 0u64;
    for dialogue in &corpus.dialogues {
        for (_, pairs) in dialogue.supporter_turns() {
            total += 1;
            if pairs.len() >= 2 {
                multi += 1;
            }
        }
    }
    if total == 0 {
        return Err(CorpusError::NoSupporterTurns);
    }
    Ok(multi as f64 / total as f64)
}

/// Formats an integer with thousands separators, e.g. `10,679`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl fmt::Display for StrategyCountTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10}{:>10}{:>12}{:>10}{:>10}", "#Strategy", "Train", "Validation", "Test", "All")?;
        let row = |f: &mut fmt::Formatter<'_>, label: &str, cells: [u64; 4]| {
            writeln!(
                f,
                "{:<10}{:>10}{:>12}{:>10}{:>10}",
                label,
                thousands(cells[0]),
                thousands(cells[1]),
                thousands(cells[2]),
                thousands(cells[3])
            )
        };
        for bucket in Bucket::ALL {
            let cells = [
                self.get(Split::Train, bucket),
                self.get(Split::Validation, bucket),
                self.get(Split::Test, bucket),
                self.bucket_total(bucket),
            ];
            row(f, bucket.label(), cells)?;
        }
        row(
            f,
            "All",
            [
                self.split_total(Split::Train),
                self.split_total(Split::Validation),
                self.split_total(Split::Test),
                self.total(),
            ],
        )
    }
}
