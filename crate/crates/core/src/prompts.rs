//! Prompt templates and flat `{name}` substitution.
//!
//! Templates live as text assets under `templates/`. Literal braces are
//! written `{{` and `}}`; a single-brace `{name}` must be a recognized
//! placeholder.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{StrategyResponse, Turn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateId {
    SingleStrategy,
    AllInOne,
    AllInOneReasoning,
    OneByOne,
    OneByOneReasoning,
    DistillAio,
    DistillObo,
    SelfplaySeekerSystem,
    SelfplaySeekerUser,
    SelfplayCriticSystem,
    SelfplayCritic,
    ProfileExtraction,
    SeekerSimulation,
}

/// Placeholder names a template may reference.
pub const PLACEHOLDERS: [&str; 9] = [
    "context",
    "response",
    "emotion_type",
    "problem_type",
    "situation",
    "conversation",
    "dialog",
    "personal_summary",
    "dialogue_history",
];

/// Context used when the supporter speaks before the seeker has said anything.
pub const OPENING_CONTEXT: &str = "(The conversation has not started yet.)";

macro_rules! template_file {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/templates/", $name, ".txt"))
    };
}

impl TemplateId {
    pub const ALL: [TemplateId; 13] = [
        TemplateId::SingleStrategy,
        TemplateId::AllInOne,
        TemplateId::AllInOneReasoning,
        TemplateId::OneByOne,
        TemplateId::OneByOneReasoning,
        TemplateId::DistillAio,
        TemplateId::DistillObo,
        TemplateId::SelfplaySeekerSystem,
        TemplateId::SelfplaySeekerUser,
        TemplateId::SelfplayCriticSystem,
        TemplateId::SelfplayCritic,
        TemplateId::ProfileExtraction,
        TemplateId::SeekerSimulation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::SingleStrategy => "single_strategy",
            TemplateId::AllInOne => "all_in_one",
            TemplateId::AllInOneReasoning => "all_in_one_reasoning",
            TemplateId::OneByOne => "one_by_one",
            TemplateId::OneByOneReasoning => "one_by_one_reasoning",
            TemplateId::DistillAio => "distill_aio",
            TemplateId::DistillObo => "distill_obo",
            TemplateId::SelfplaySeekerSystem => "selfplay_seeker_system",
            TemplateId::SelfplaySeekerUser => "selfplay_seeker_user",
            TemplateId::SelfplayCriticSystem => "selfplay_critic_system",
            TemplateId::SelfplayCritic => "selfplay_critic",
            TemplateId::ProfileExtraction => "profile_extraction",
            TemplateId::SeekerSimulation => "seeker_simulation",
        }
    }

    pub fn from_name(name: &str) -> Option<TemplateId> {
        TemplateId::ALL.iter().copied().find(|t| t.name() == name)
    }

    /// Stored template source, without the file's trailing newline.
    pub fn source(self) -> &'static str {
        let raw = match self {
            TemplateId::SingleStrategy => template_file!("single_strategy"),
            TemplateId::AllInOne => template_file!("all_in_one"),
            TemplateId::AllInOneReasoning => template_file!("all_in_one_reasoning"),
            TemplateId::OneByOne => template_file!("one_by_one"),
            TemplateId::OneByOneReasoning => template_file!("one_by_one_reasoning"),
            TemplateId::DistillAio => template_file!("distill_aio"),
            TemplateId::DistillObo => template_file!("distill_obo"),
            TemplateId::SelfplaySeekerSystem => template_file!("selfplay_seeker_system"),
            TemplateId::SelfplaySeekerUser => template_file!("selfplay_seeker_user"),
            TemplateId::SelfplayCriticSystem => template_file!("selfplay_critic_system"),
            TemplateId::SelfplayCritic => template_file!("selfplay_critic"),
            TemplateId::ProfileExtraction => template_file!("profile_extraction"),
            TemplateId::SeekerSimulation => template_file!("seeker_simulation"),
        };
        raw.strip_suffix('\n').unwrap_or(raw)
    }

    /// Placeholders referenced by this template, in first-use order.
    pub fn placeholders(self) -> Vec<&'static str> {
        let mut names = Vec::new();
        for segment in segments(self.source()).expect("stored templates are well-formed") {
            if let Segment::Placeholder(name) = segment {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("missing or empty binding for placeholder `{0}`")]
    Missing(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown placeholder `{name}` at byte {offset}")]
    UnknownPlaceholder { name: String, offset: usize },
    #[error("unbalanced brace at byte {0}")]
    Unbalanced(usize),
}

/// Placeholder values. Bindings not referenced by a template are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }

    pub fn insert(&mut self, name: &str, value: impl Into<String>) {
        self.0.insert(name.to_string(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn segments(source: &str) -> Result<Vec<Segment<'_>>, TemplateError> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Segment::Literal(&source[start..i + 1]));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Segment::Literal(&source[start..i + 1]));
                i += 2;
                start = i;
            }
            b'{' => {
                let close = source[i + 1..]
                    .find('}')
                    .map(|j| i + 1 + j)
                    .ok_or(TemplateError::Unbalanced(i))?;
                let name = &source[i + 1..close];
                if !PLACEHOLDERS.contains(&name) {
                    return Err(TemplateError::UnknownPlaceholder {
                        name: name.to_string(),
                        offset: i,
                    });
                }
                out.push(Segment::Literal(&source[start..i]));
                out.push(Segment::Placeholder(name));
                i = close + 1;
                start = i;
            }
            b'}' => return Err(TemplateError::Unbalanced(i)),
            _ => i += 1,
        }
    }
    out.push(Segment::Literal(&source[start..]));
    Ok(out)
}

/// Checks that every single brace in `source` belongs to a recognized placeholder.
pub fn lint(source: &str) -> Result<(), TemplateError> {
    segments(source).map(|_| ())
}

/// Renders a stored template.
pub fn render(template: TemplateId, bindings: &Bindings) -> Result<String, RenderError> {
    render_source(template.source(), bindings)
}

fn render_source(source: &str, bindings: &Bindings) -> Result<String, RenderError> {
    let parts = segments(source).expect("stored templates are well-formed");
    let mut out = String::with_capacity(source.len());
    for part in parts {
        match part {
            Segment::Literal(text) => out.push_str(text),
            Segment::Placeholder(name) => match bindings.get(name) {
                Some(value) if !value.trim().is_empty() => out.push_str(value),
                _ => return Err(RenderError::Missing(name.to_string())),
            },
        }
    }
    Ok(out)
}

/// Serializes dialogue history for the `{context}` placeholder.
///
/// One line per turn: `Seeker: <text>` or `Supporter: <text>`. Pairs already
/// generated for the current utterance follow as `Supporter: [<strategy>] <text>`.
pub fn format_context(history: &[Turn], pending_pairs: &[StrategyResponse]) -> String {
    let mut lines: Vec<String> = Vec::with_capacity(history.len() + pending_pairs.len());
    for turn in history {
        let speaker = match turn {
            Turn::Seeker { .. } => "Seeker",
            Turn::Supporter { .. } => "Supporter",
        };
        lines.push(alloc::format!("{speaker}: {}", turn.text()));
    }
    for pair in pending_pairs {
        lines.push(alloc::format!("Supporter: [{}] {}", pair.strategy, pair.text));
    }
    if lines.is_empty() {
        return OPENING_CONTEXT.to_string();
    }
    lines.join("\n")
}

/// Tagged reply for distillation prompts: `[<strategy>] <text>` per pair.
pub fn format_tagged_reply(pairs: &[StrategyResponse]) -> String {
    pairs
        .iter()
        .map(|p| alloc::format!("[{}] {}", p.strategy, p.text))
        .collect::<Vec<_>>()
        .join(" ")
}
