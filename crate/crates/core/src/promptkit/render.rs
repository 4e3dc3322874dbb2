use super::template::fill;
use super::{
    py_list, CandidateSlot, OutputMode, PromptBundle, PromptError, PromptStrategy, StrategyKind,
    Templates,
};
use crate::candgen::CandidateSet;
use crate::corpus::{Catalog, UserHistory};
use crate::{ItemId, UserId};

/// A history prefix resolved to titles and split per strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryPattern {
    pub user: UserId,
    pub kind: StrategyKind,
    /// Items printed in the numbered history list.
    pub listed: Vec<(ItemId, String)>,
    /// In-context demonstration target (the most recent item).
    pub demo: Option<(ItemId, String)>,
    /// Title named by the recency note.
    pub recent: Option<String>,
}

impl HistoryPattern {
    /// All history items that appear in the prompt, oldest first.
    pub fn items(&self) -> Vec<ItemId> {
        self.listed
            .iter()
            .chain(&self.demo)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.listed.is_empty() && self.demo.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePattern {
    pub user: UserId,
    pub slots: Vec<CandidateSlot>,
}

fn numbered(titles: impl Iterator<Item = impl AsRef<str>>) -> String {
    let entries: Vec<String> = titles
        .enumerate()
        .map(|(i, t)| format!("{i}. {}", t.as_ref()))
        .collect();
    py_list(&entries)
}

fn title_of(catalog: &Catalog, id: &ItemId) -> Result<String, PromptError> {
    catalog
        .title(id)
        .map(str::to_string)
        .ok_or_else(|| PromptError::MissingTitle(id.clone()))
}

/// Keeps the last `max_history` items of `prefix`. An empty prefix yields
/// an empty pattern whose history sentence is omitted.
pub fn render_history(
    prefix: &UserHistory,
    catalog: &Catalog,
    strategy: PromptStrategy,
) -> Result<HistoryPattern, PromptError> {
    if strategy.max_history == 0 {
        return Err(PromptError::InvalidMaxHistory);
    }
    let start = prefix.items.len().saturating_sub(strategy.max_history);
    let mut shown = prefix.items[start..]
        .iter()
        .map(|id| Ok((id.clone(), title_of(catalog, id)?)))
        .collect::<Result<Vec<_>, PromptError>>()?;
    let mut pattern = HistoryPattern {
        user: prefix.user.clone(),
        kind: strategy.kind,
        listed: Vec::new(),
        demo: None,
        recent: None,
    };
    if shown.is_empty() {
        return Ok(pattern);
    }
    match strategy.kind {
        StrategyKind::Sequential => {}
        StrategyKind::RecencyFocused => {
            pattern.recent = shown.last().map(|(_, t)| t.clone());
        }
        StrategyKind::Icl => {
            if shown.len() < 2 {
                return Err(PromptError::IclNeedsTwo(shown.len()));
            }
            pattern.demo = shown.pop();
        }
    }
    pattern.listed = shown;
    Ok(pattern)
}

/// Prints the candidates so that slot `s` holds `set.items()[permutation[s]]`.
pub fn render_candidates(
    set: &CandidateSet,
    catalog: &Catalog,
    permutation: &[usize],
) -> Result<CandidatePattern, PromptError> {
    let m = set.len();
    if permutation.len() != m {
        return Err(PromptError::PermutationLength {
            expected: m,
            got: permutation.len(),
        });
    }
    let mut used = vec![false; m];
    for &p in permutation {
        if p >= m || std::mem::replace(&mut used[p], true) {
            return Err(PromptError::NotBijection(m));
        }
    }
    let slots = permutation
        .iter()
        .enumerate()
        .map(|(slot, &p)| {
            let item = set.items()[p].clone();
            let title = title_of(catalog, &item)?;
            Ok(CandidateSlot { slot, item, title })
        })
        .collect::<Result<Vec<_>, PromptError>>()?;
    Ok(CandidatePattern {
        user: set.user.clone(),
        slots,
    })
}

pub fn assemble_prompt(
    templates: &Templates,
    history: &HistoryPattern,
    candidates: &CandidatePattern,
    output_mode: OutputMode,
    domain: &str,
) -> Result<PromptBundle, PromptError> {
    assert_eq!(history.user, candidates.user, "patterns for different users");
    let nouns = templates.domain(domain)?;
    let m = candidates.slots.len().to_string();
    let cand_list = numbered(candidates.slots.iter().map(|c| c.title.as_str()));

    let mut text = String::new();
    if !history.listed.is_empty() {
        let list = numbered(history.listed.iter().map(|(_, t)| t.as_str()));
        text.push_str(&fill(&templates.history, nouns, &[("history", &list)]));
    }
    match &history.demo {
        Some((_, demo)) => text.push_str(&fill(
            &templates.icl_candidates,
            nouns,
            &[("m", &m), ("candidates", &cand_list), ("demo", demo)],
        )),
        None => text.push_str(&fill(
            &templates.candidates,
            nouns,
            &[("m", &m), ("candidates", &cand_list)],
        )),
    }
    text.push_str(&fill(&templates.rank, nouns, &[("m", &m)]));
    if let Some(recent) = &history.recent {
        text.push_str(&fill(&templates.recency, nouns, &[("recent", recent)]));
    }
    let tail = match output_mode {
        OutputMode::Title => &templates.title_tail,
        OutputMode::Index => &templates.index_tail,
    };
    text.push_str(&fill(tail, nouns, &[]));

    Ok(PromptBundle {
        user: candidates.user.clone(),
        text,
        candidate_slots: candidates.slots.clone(),
        output_mode,
        strategy: history.kind,
        domain: domain.to_string(),
        history: history.items(),
    })
}

/// Renders and assembles in one step, printing candidates in set order.
pub fn build_prompt(
    templates: &Templates,
    catalog: &Catalog,
    prefix: &UserHistory,
    set: &CandidateSet,
    strategy: PromptStrategy,
    output_mode: OutputMode,
    domain: &str,
) -> Result<PromptBundle, PromptError> {
    let history = render_history(prefix, catalog, strategy)?;
    let identity: Vec<usize> = (0..set.len()).collect();
    let candidates = render_candidates(set, catalog, &identity)?;
    assemble_prompt(templates, &history, &candidates, output_mode, domain)
}
