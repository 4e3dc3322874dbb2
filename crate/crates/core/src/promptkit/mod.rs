//! Instruction prompts: history and candidate rendering, template assembly
//! and history ablations.

mod ablation;
mod pyrepr;
mod render;
mod template;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{ItemId, UserId};

pub use ablation::{make_ablation, Ablation};
pub use pyrepr::{py_list, py_repr};
pub use render::{
    assemble_prompt, build_prompt, render_candidates, render_history, CandidatePattern,
    HistoryPattern,
};
pub use template::{DomainNouns, Templates};

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("in-context learning needs at least 2 history items, got {0}")]
    IclNeedsTwo(usize),
    #[error("max_history must be at least 1")]
    InvalidMaxHistory,
    #[error("permutation has {got} entries for {expected} candidates")]
    PermutationLength { expected: usize, got: usize },
    #[error("permutation is not a bijection over 0..{0}")]
    NotBijection(usize),
    #[error("item {0} has no title in the catalog")]
    MissingTitle(ItemId),
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("template {name}: {message}")]
    Template { name: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Sequential,
    RecencyFocused,
    Icl,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::Sequential,
        StrategyKind::RecencyFocused,
        StrategyKind::Icl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Sequential => "sequential",
            StrategyKind::RecencyFocused => "recency_focused",
            StrategyKind::Icl => "icl",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStrategy {
    pub kind: StrategyKind,
    pub max_history: usize,
}

impl PromptStrategy {
    pub fn new(kind: StrategyKind, max_history: usize) -> Result<Self, PromptError> {
        if max_history == 0 {
            return Err(PromptError::InvalidMaxHistory);
        }
        Ok(PromptStrategy { kind, max_history })
    }
}

impl Default for PromptStrategy {
    fn default() -> Self {
        PromptStrategy {
            kind: StrategyKind::Sequential,
            max_history: 50,
        }
    }
}

/// Whether the model is asked to answer with titles or with slot numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    Title,
    Index,
}

impl OutputMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputMode::Title => "title",
            OutputMode::Index => "index",
        }
    }
}

impl fmt::Display for OutputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutputMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "title" => Ok(OutputMode::Title),
            "index" => Ok(OutputMode::Index),
            other => Err(format!("unknown output mode {other:?}")),
        }
    }
}

/// One printed candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSlot {
    pub slot: usize,
    pub item: ItemId,
    pub title: String,
}

/// A rendered prompt plus everything needed to ground the answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub user: UserId,
    pub text: String,
    pub candidate_slots: Vec<CandidateSlot>,
    pub output_mode: OutputMode,
    pub strategy: StrategyKind,
    pub domain: String,
    /// History items shown in the prompt, oldest first, including an
    /// in-context demonstration target.
    pub history: Vec<ItemId>,
}

impl PromptBundle {
    pub fn m(&self) -> usize {
        self.candidate_slots.len()
    }

    pub fn item_at(&self, slot: usize) -> Option<&ItemId> {
        self.candidate_slots.get(slot).map(|c| &c.item)
    }

    pub fn slot_of(&self, item: &ItemId) -> Option<usize> {
        self.candidate_slots.iter().position(|c| &c.item == item)
    }

    pub fn titles(&self) -> impl Iterator<Item = &str> {
        self.candidate_slots.iter().map(|c| c.title.as_str())
    }
}
