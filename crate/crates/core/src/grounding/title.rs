use super::{kmp_find, strip_enumeration, ParseDiagnostics, Ranking};
use crate::promptkit::PromptBundle;
use crate::text::tokenize;
use crate::ItemId;

/// Ranks candidates by where their normalized titles first occur in `raw`.
///
/// Titles are matched longest first (ties by slot), and each match masks
/// the tokens it covers, so a title that is a substring of another cannot
/// steal the longer title's mention. Matches never span lines. Identical
/// titles resolve by slot: the lower slot claims the earlier mention.
pub fn parse_title_output(
    raw: &str,
    bundle: &PromptBundle,
    ground_truth: Option<&ItemId>,
) -> Ranking {
    let lines: Vec<Vec<String>> = raw
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| tokenize(strip_enumeration(l)))
        .collect();
    let mut stream: Vec<Option<&str>> = Vec::new();
    let mut line_of: Vec<usize> = Vec::new();
    for (li, toks) in lines.iter().enumerate() {
        for t in toks {
            stream.push(Some(t.as_str()));
            line_of.push(li);
        }
        stream.push(None);
        line_of.push(li);
    }

    let cand_tokens: Vec<Vec<String>> = bundle.titles().map(tokenize).collect();
    let mut diag = ParseDiagnostics {
        lines: lines.len(),
        ..Default::default()
    };
    diag.collisions = cand_tokens
        .iter()
        .enumerate()
        .filter(|(i, t)| {
            !t.is_empty()
                && cand_tokens
                    .iter()
                    .enumerate()
                    .any(|(j, u)| j != *i && u == *t)
        })
        .count();

    let mut order: Vec<usize> = (0..cand_tokens.len()).collect();
    order.sort_by_key(|&s| (std::cmp::Reverse(cand_tokens[s].len()), s));

    let mut claims: Vec<(usize, usize)> = Vec::new();
    let mut grounded = vec![false; lines.len()];
    for slot in order {
        let toks = &cand_tokens[slot];
        if toks.is_empty() {
            continue;
        }
        let pattern: Vec<Option<&str>> = toks.iter().map(|t| Some(t.as_str())).collect();
        if let Some(off) = kmp_find(&pattern, &stream) {
            for cell in &mut stream[off..off + pattern.len()] {
                *cell = None;
            }
            grounded[line_of[off]] = true;
            claims.push((off, slot));
        }
    }
    claims.sort_unstable();

    // lines without a claim that still name a candidate are repeats
    for (li, toks) in lines.iter().enumerate() {
        if grounded[li] {
            continue;
        }
        let repeat = cand_tokens
            .iter()
            .any(|c| !c.is_empty() && kmp_find(c.as_slice(), toks.as_slice()).is_some());
        if repeat {
            diag.duplicates += 1;
            grounded[li] = true;
        }
    }
    diag.ooc_lines = grounded.iter().filter(|g| !**g).count();
    diag.unparseable = claims.is_empty();

    let placed: Vec<usize> = claims.into_iter().map(|(_, s)| s).collect();
    Ranking::from_slots(bundle, &placed, diag, ground_truth)
}
