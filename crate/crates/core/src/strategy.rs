//! The closed set of support strategies annotated in ESConv.

use core::fmt;
use core::str::FromStr;

use alloc::string::{String, ToString};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One of the eight canonical support strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyLabel {
    Question,
    RestatementOrParaphrasing,
    ReflectionOfFeelings,
    SelfDisclosure,
    AffirmationAndReassurance,
    ProvidingSuggestions,
    Information,
    Others,
}

/// A strategy string outside the canonical set.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown strategy {0:?}")]
pub struct UnknownStrategy(pub String);

impl StrategyLabel {
    pub const ALL: [StrategyLabel; 8] = [
        StrategyLabel::Question,
        StrategyLabel::RestatementOrParaphrasing,
        StrategyLabel::ReflectionOfFeelings,
        StrategyLabel::SelfDisclosure,
        StrategyLabel::AffirmationAndReassurance,
        StrategyLabel::ProvidingSuggestions,
        StrategyLabel::Information,
        StrategyLabel::Others,
    ];

    /// Canonical spelling, as it appears in the corpus and in model outputs.
    pub const fn as_str(self) -> &'static str {
        match self {
            StrategyLabel::Question => "Question",
            StrategyLabel::RestatementOrParaphrasing => "Restatement or Paraphrasing",
            StrategyLabel::ReflectionOfFeelings => "Reflection of feelings",
            StrategyLabel::SelfDisclosure => "Self-disclosure",
            StrategyLabel::AffirmationAndReassurance => "Affirmation and Reassurance",
            StrategyLabel::ProvidingSuggestions => "Providing Suggestions",
            StrategyLabel::Information => "Information",
            StrategyLabel::Others => "Others",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for StrategyLabel {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyLabel::ALL
            .iter()
            .copied()
            .find(|label| label.as_str() == s)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

impl fmt::Display for StrategyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for StrategyLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for StrategyLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}
