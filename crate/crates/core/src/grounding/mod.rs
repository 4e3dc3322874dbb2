//! Mapping raw model output back onto the candidate set.
//!
//! Every parse yields a full permutation of the candidates. Candidates the
//! output never mentions are appended in slot order, and lines that
//! mention no candidate at all are counted as out-of-candidate.

mod index;
mod kmp;
mod title;

use serde::{Deserialize, Serialize};

use crate::promptkit::{OutputMode, PromptBundle};
use crate::ItemId;

pub use index::parse_index_output;
pub use kmp::{kmp_find, naive_find};
pub use title::parse_title_output;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostics {
    /// Non-empty output lines.
    pub lines: usize,
    /// Candidates placed from the output.
    pub matched: usize,
    /// Candidates appended because the output never mentioned them.
    pub unmatched_candidates: usize,
    /// Lines that grounded no candidate.
    pub ooc_lines: usize,
    /// Mentions of a candidate that was already placed.
    pub duplicates: usize,
    /// Out-of-range integers (index mode only).
    pub ooc_indices: usize,
    /// Candidates whose normalized title equals another candidate's.
    pub collisions: usize,
    /// Nothing could be matched; the ranking is plain slot order.
    pub unparseable: bool,
}

/// A parsed ranking: every candidate exactly once, best first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub items: Vec<ItemId>,
    /// Prompt slot of each ranked item.
    pub slots: Vec<usize>,
    pub diagnostics: ParseDiagnostics,
    /// 0-based rank of the ground truth, when it is a candidate.
    pub gt_rank: Option<usize>,
}

impl Ranking {
    /// Builds a ranking from an ordered list of distinct slots, appending
    /// every slot not listed in ascending order.
    pub fn from_slots(
        bundle: &PromptBundle,
        placed: &[usize],
        mut diagnostics: ParseDiagnostics,
        ground_truth: Option<&ItemId>,
    ) -> Ranking {
        let m = bundle.m();
        let mut used = vec![false; m];
        let mut slots = Vec::with_capacity(m);
        for &s in placed {
            assert!(s < m && !used[s], "placed slots must be distinct and in range");
            used[s] = true;
            slots.push(s);
        }
        diagnostics.matched = slots.len();
        diagnostics.unmatched_candidates = m - slots.len();
        slots.extend((0..m).filter(|&s| !used[s]));
        let items: Vec<ItemId> = slots
            .iter()
            .map(|&s| bundle.candidate_slots[s].item.clone())
            .collect();
        let gt_rank = ground_truth.and_then(|gt| items.iter().position(|x| x == gt));
        Ranking {
            items,
            slots,
            diagnostics,
            gt_rank,
        }
    }

    /// Rank position (0-based) of each slot.
    pub fn rank_of_slot(&self) -> Vec<usize> {
        let mut out = vec![0; self.slots.len()];
        for (rank, &slot) in self.slots.iter().enumerate() {
            out[slot] = rank;
        }
        out
    }
}

/// Parses according to the bundle's output mode.
pub fn parse_output(raw: &str, bundle: &PromptBundle, ground_truth: Option<&ItemId>) -> Ranking {
    match bundle.output_mode {
        OutputMode::Title => parse_title_output(raw, bundle, ground_truth),
        OutputMode::Index => parse_index_output(raw, bundle, ground_truth),
    }
}

/// Out-of-candidate lines over all output lines across `rankings`.
pub fn ooc_rate<'a>(rankings: impl IntoIterator<Item = &'a Ranking>) -> f64 {
    let (ooc, lines) = rankings.into_iter().fold((0usize, 0usize), |(o, l), r| {
        (o + r.diagnostics.ooc_lines, l + r.diagnostics.lines)
    });
    if lines == 0 {
        0.0
    } else {
        ooc as f64 / lines as f64
    }
}

/// Removes a leading list marker such as `3.` or `12)` when something
/// follows it.
pub(crate) fn strip_enumeration(line: &str) -> &str {
    let t = line.trim_start();
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return line;
    }
    let rest = &t[digits..];
    match rest.strip_prefix(['.', ')']) {
        Some(after) if after.starts_with(char::is_whitespace) && !after.trim().is_empty() => {
            after.trim_start()
        }
        _ => line,
    }
}
