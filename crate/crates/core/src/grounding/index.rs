use super::{strip_enumeration, ParseDiagnostics, Ranking};
use crate::promptkit::PromptBundle;
use crate::ItemId;

/// Maximal runs of ASCII digits; `None` for values too large to represent.
fn integers(line: &str) -> Vec<Option<usize>> {
    line.split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().ok())
        .collect()
}

/// Ranks candidates by the slot numbers in `raw`, in order of appearance.
///
/// Repeated slots keep their first position. Integers outside `0..m` are
/// counted as out-of-candidate. A leading list marker (`3. 17`) is ignored
/// when the rest of the line holds a number.
pub fn parse_index_output(
    raw: &str,
    bundle: &PromptBundle,
    ground_truth: Option<&ItemId>,
) -> Ranking {
    let m = bundle.m();
    let mut diag = ParseDiagnostics::default();
    let mut used = vec![false; m];
    let mut placed = Vec::new();
    for line in raw.lines().filter(|l| !l.trim().is_empty()) {
        diag.lines += 1;
        let stripped = strip_enumeration(line);
        let text = if stripped.contains(|c: char| c.is_ascii_digit()) {
            stripped
        } else {
            line
        };
        let mut grounded = false;
        for value in integers(text) {
            match value {
                Some(s) if s < m => {
                    grounded = true;
                    if used[s] {
                        diag.duplicates += 1;
                    } else {
                        used[s] = true;
                        placed.push(s);
                    }
                }
                _ => diag.ooc_indices += 1,
            }
        }
        if !grounded {
            diag.ooc_lines += 1;
        }
    }
    diag.unparseable = placed.is_empty();
    Ranking::from_slots(bundle, &placed, diag, ground_truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::title::tests::bundle;
    use crate::promptkit::OutputMode;

    #[test]
    fn duplicates_and_out_of_range() {
        let b = bundle(&["a", "b", "c"], OutputMode::Index);
        let r = parse_index_output("0\n0\n1", &b, None);
        assert_eq!(r.slots, [0, 1, 2]);
        assert_eq!(r.diagnostics.duplicates, 1);
        assert_eq!(r.diagnostics.unmatched_candidates, 1);

        let r = parse_index_output("2\n7\nfoo\n99999999999999999999999\n0", &b, Some(&"c1".into()));
        assert_eq!(r.slots, [2, 0, 1]);
        assert_eq!(r.gt_rank, Some(2));
        assert_eq!(r.diagnostics.lines, 5);
        assert_eq!(r.diagnostics.ooc_lines, 3);
        assert_eq!(r.diagnostics.ooc_indices, 2);

        let r = parse_index_output("none", &b, None);
        assert!(r.diagnostics.unparseable);
        assert_eq!(r.slots, [0, 1, 2]);
    }

    #[test]
    fn list_markers_are_skipped() {
        let b = bundle(&["a", "b", "c", "d"], OutputMode::Index);
        let r = parse_index_output("1. 3\n2. 0\n3. 2", &b, None);
        assert_eq!(r.slots, [3, 0, 2, 1]);
    }
}
