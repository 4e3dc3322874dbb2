use std::collections::HashSet;

use super::{CandGenError, CandidateSet};
use crate::ItemId;

/// Union of the first `top_k` items of each list. When an item appears in
/// several lists the first list's provenance wins. The result is shuffled by
/// `seed`; the ground truth is located but never injected.
pub fn fuse_candidates(
    lists: &[CandidateSet],
    top_k: usize,
    ground_truth: Option<&ItemId>,
    seed: u64,
) -> Result<CandidateSet, CandGenError> {
    let first = lists.first().ok_or(CandGenError::TooSmall(0))?;
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    let mut sources = Vec::new();
    for (index, list) in lists.iter().enumerate() {
        if list.len() < top_k {
            return Err(CandGenError::ShortList {
                index,
                len: list.len(),
                top_k,
            });
        }
        for (item, src) in list.items().iter().zip(list.sources()).take(top_k) {
            if seen.insert(item) {
                items.push(item.clone());
                sources.push(*src);
            }
        }
    }
    Ok(CandidateSet::new(first.user.clone(), items, sources, ground_truth)?.shuffled(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candgen::Provenance;
    use proptest::prelude::*;

    fn list(items: &[&str], p: Provenance) -> CandidateSet {
        CandidateSet::new(
            "u".into(),
            items.iter().map(|&s| s.into()).collect(),
            vec![p; items.len()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn overlapping_lists_keep_first_provenance() {
        let a = list(&["x", "y", "z", "w"], Provenance::Pop);
        let b = list(&["y", "q", "x", "r"], Provenance::Bm25);
        let f = fuse_candidates(&[a.clone(), b.clone()], 3, Some(&"q".into()), 1).unwrap();
        let mut got: Vec<(&str, Provenance)> = f
            .items()
            .iter()
            .map(ItemId::as_str)
            .zip(f.sources().iter().copied())
            .collect();
        got.sort();
        assert_eq!(
            got,
            [
                ("q", Provenance::Bm25),
                ("x", Provenance::Pop),
                ("y", Provenance::Pop),
                ("z", Provenance::Pop),
            ]
        );
        assert_eq!(f.ground_truth().map(ItemId::as_str), Some("q"));
        let miss = fuse_candidates(&[a.clone(), b.clone()], 2, Some(&"r".into()), 1).unwrap();
        assert!(!miss.ground_truth_present());
        assert!(matches!(
            fuse_candidates(&[a, b], 5, None, 1),
            Err(CandGenError::ShortList { index: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn fused_set_is_the_union_of_heads(
            raw in prop::collection::vec(
                prop::collection::btree_set(0u8..12, 3..8), 1..4),
            seed in any::<u64>(),
        ) {
            let lists: Vec<CandidateSet> = raw
                .iter()
                .map(|s| {
                    let names: Vec<String> = s.iter().rev().map(|i| format!("i{i}")).collect();
                    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                    list(&refs, Provenance::Random)
                })
                .collect();
            let fused = fuse_candidates(&lists, 3, None, seed).unwrap();
            let mut want: Vec<ItemId> = lists
                .iter()
                .flat_map(|l| l.items()[..3].iter().cloned())
                .collect();
            want.sort();
            want.dedup();
            let mut got = fused.items().to_vec();
            got.sort();
            prop_assert_eq!(got, want);
        }
    }
}
