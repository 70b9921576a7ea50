//! Four-node cognitive reasoning chains.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::parse::{extract_embedded, strip_code_fence};

/// Node labels, in the order they must appear inside a think block.
pub const NODE_LABELS: [&str; 4] = ["Context", "Cognition", "Emotion", "Support Plan"];

/// Word limit for the context, cognition and emotion nodes.
pub const MAX_NODE_WORDS: usize = 25;

const SEEKER_PREFIX: &str = "The seeker";
const NOT_AVAILABLE: &str = "N/A";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub context: String,
    pub cognition: String,
    pub emotion: String,
    pub support_plan: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("field `{0}` is missing or not a string")]
    MissingField(&'static str),
    #[error("node `{0}` is empty")]
    Empty(&'static str),
    #[error("node `{node}` has {words} words (max {MAX_NODE_WORDS})")]
    TooLong { node: &'static str, words: usize },
    #[error("node `{0}` must start with \"The seeker\" or be \"N/A\"")]
    Prefix(&'static str),
    #[error("node `{0}` has leading or trailing whitespace")]
    Untrimmed(&'static str),
    #[error("node `{0}` contains a reserved marker")]
    Marker(&'static str),
    #[error("teacher response contains no JSON object")]
    NoObject,
}

/// Whitespace-delimited token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn node_marker(label: &str) -> String {
    alloc::format!("[{label}]:")
}

fn contains_reserved(text: &str) -> bool {
    NODE_LABELS.iter().any(|l| text.contains(&node_marker(l)))
        || ["<think>", "</think>", "<answer>", "</answer>"]
            .iter()
            .any(|t| text.contains(t))
}

impl ReasoningChain {
    pub fn nodes(&self) -> [(&'static str, &str); 4] {
        [
            (NODE_LABELS[0], &self.context),
            (NODE_LABELS[1], &self.cognition),
            (NODE_LABELS[2], &self.emotion),
            (NODE_LABELS[3], &self.support_plan),
        ]
    }

    /// Checks the distillation rules: all nodes non-empty, the first three at
    /// most 25 words and starting with "The seeker" (or exactly "N/A").
    pub fn validate(&self) -> Result<(), ChainError> {
        for (i, (label, text)) in self.nodes().into_iter().enumerate() {
            if text.trim().is_empty() {
                return Err(ChainError::Empty(label));
            }
            if text.trim() != text {
                return Err(ChainError::Untrimmed(label));
            }
            if contains_reserved(text) {
                return Err(ChainError::Marker(label));
            }
            if i < 3 && text != NOT_AVAILABLE {
                let words = word_count(text);
                if words > MAX_NODE_WORDS {
                    return Err(ChainError::TooLong { node: label, words });
                }
                if !text.starts_with(SEEKER_PREFIX) {
                    return Err(ChainError::Prefix(label));
                }
            }
        }
        Ok(())
    }

    /// Body of a think block: one `[Label]: text` line per node.
    pub fn to_think_body(&self) -> String {
        self.nodes()
            .iter()
            .map(|(label, text)| alloc::format!("[{label}]: {text}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Why a think block failed to parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeError {
    Missing(&'static str),
    Duplicated(&'static str),
    OutOfOrder(&'static str),
    Empty(&'static str),
    Preamble,
}

/// Splits a think block into its four labeled nodes.
pub(crate) fn parse_think_body(body: &str) -> Result<ReasoningChain, NodeError> {
    let body = body.trim();
    let mut positions = [0usize; 4];
    for (i, label) in NODE_LABELS.iter().enumerate() {
        let marker = node_marker(label);
        let mut hits = body.match_indices(marker.as_str());
        let first = hits.next().ok_or(NodeError::Missing(label))?.0;
        if hits.next().is_some() {
            return Err(NodeError::Duplicated(label));
        }
        if i > 0 && first < positions[i - 1] {
            return Err(NodeError::OutOfOrder(label));
        }
        positions[i] = first;
    }
    if positions[0] != 0 {
        return Err(NodeError::Preamble);
    }
    let mut texts: Vec<String> = Vec::with_capacity(4);
    for (i, label) in NODE_LABELS.iter().enumerate() {
        let start = positions[i] + node_marker(label).len();
        let end = positions.get(i + 1).copied().unwrap_or(body.len());
        let text = body[start..end].trim();
        if text.is_empty() {
            return Err(NodeError::Empty(label));
        }
        texts.push(text.to_string());
    }
    let mut it = texts.into_iter();
    Ok(ReasoningChain {
        context: it.next().unwrap(),
        cognition: it.next().unwrap(),
        emotion: it.next().unwrap(),
        support_plan: it.next().unwrap(),
    })
}

/// Parses a teacher's distillation response into a validated chain.
///
/// Code fences and prose around the JSON object are tolerated; the object must
/// carry the four node fields as strings.
pub fn parse_chain(text: &str) -> Result<ReasoningChain, ChainError> {
    let (unfenced, _) = strip_code_fence(text);
    let (value, _) = extract_embedded(unfenced, |v| v.is_object()).ok_or(ChainError::NoObject)?;
    let field = |name: &'static str| -> Result<String, ChainError> {
        value
            .get(name)
            .and_then(serde_json::Value::as_str)
            .map(|s| s.trim().to_string())
            .ok_or(ChainError::MissingField(name))
    };
    let chain = ReasoningChain {
        context: field("Context")?,
        cognition: field("Cognition")?,
        emotion: field("Emotion")?,
        support_plan: field("Support Plan")?,
    };
    chain.validate()?;
    Ok(chain)
}
