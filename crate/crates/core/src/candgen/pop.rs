use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{CandGenError, CandidateSet, Provenance};
use crate::corpus::{Catalog, EvalInstance, UserHistory};
use crate::ItemId;

/// Training-set interaction counts over the whole catalog, ranked by
/// descending count with ascending id as tie-break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Ranked", into = "Ranked")]
pub struct PopularityTable {
    ranked: Vec<(ItemId, u64)>,
    counts: HashMap<ItemId, u64>,
}

#[derive(Serialize, Deserialize)]
struct Ranked {
    ranked: Vec<(ItemId, u64)>,
}

impl From<Ranked> for PopularityTable {
    fn from(r: Ranked) -> Self {
        let counts = r.ranked.iter().cloned().collect();
        PopularityTable {
            ranked: r.ranked,
            counts,
        }
    }
}

impl From<PopularityTable> for Ranked {
    fn from(t: PopularityTable) -> Self {
        Ranked { ranked: t.ranked }
    }
}

impl PopularityTable {
    /// Counts interactions in `training`; catalog items never seen get 0.
    pub fn from_training(catalog: &Catalog, training: &[UserHistory]) -> Self {
        let mut counts: HashMap<ItemId, u64> = catalog.ids().map(|id| (id.clone(), 0)).collect();
        for h in training {
            for id in &h.items {
                if let Some(c) = counts.get_mut(id) {
                    *c += 1;
                }
            }
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: HashMap<ItemId, u64>) -> Self {
        let mut ranked: Vec<(ItemId, u64)> = counts.iter().map(|(k, &v)| (k.clone(), v)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        PopularityTable { ranked, counts }
    }

    pub fn count(&self, id: &ItemId) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn ranked(&self) -> &[(ItemId, u64)] {
        &self.ranked
    }

    pub fn max_count(&self) -> u64 {
        self.ranked.first().map_or(0, |x| x.1)
    }

    /// Count divided by the maximum count, in `[0, 1]`.
    pub fn normalized(&self, id: &ItemId) -> f64 {
        match self.max_count() {
            0 => 0.0,
            max => self.count(id) as f64 / max as f64,
        }
    }

    /// The first `m` ranked items not rejected by `exclude`.
    pub(crate) fn top(&self, m: usize, exclude: impl Fn(&ItemId) -> bool) -> Vec<ItemId> {
        self.ranked
            .iter()
            .filter(|(id, _)| !exclude(id))
            .take(m)
            .map(|(id, _)| id.clone())
            .collect()
    }
}

/// The `m` most popular items outside the user's prefix.
pub fn gen_pop(
    table: &PopularityTable,
    instance: &EvalInstance,
    m: usize,
) -> Result<CandidateSet, CandGenError> {
    let history: HashSet<&ItemId> = instance.prefix.items.iter().collect();
    let items = table.top(m, |id| history.contains(id));
    if items.len() < m {
        return Err(CandGenError::InsufficientItems {
            needed: m,
            available: items.len(),
        });
    }
    let sources = vec![Provenance::Pop; items.len()];
    CandidateSet::new(
        instance.user.clone(),
        items,
        sources,
        Some(&instance.ground_truth),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserHistory;
    use proptest::prelude::*;

    fn table(counts: &[(&str, u64)]) -> PopularityTable {
        PopularityTable::from_counts(counts.iter().map(|&(k, v)| (k.into(), v)).collect())
    }

    fn instance(history: &[&str]) -> EvalInstance {
        EvalInstance {
            user: "u".into(),
            prefix: UserHistory {
                user: "u".into(),
                items: history.iter().map(|&s| s.into()).collect(),
                timestamps: vec![0; history.len()],
            },
            ground_truth: "gt".into(),
        }
    }

    fn ids(s: &CandidateSet) -> Vec<&str> {
        s.items().iter().map(ItemId::as_str).collect()
    }

    #[test]
    fn examples() {
        let t = table(&[("a", 3), ("b", 2), ("c", 1)]);
        assert_eq!(ids(&gen_pop(&t, &instance(&[]), 2).unwrap()), ["a", "b"]);
        assert_eq!(ids(&gen_pop(&t, &instance(&["a"]), 2).unwrap()), ["b", "c"]);
        assert!(gen_pop(&t, &instance(&["a", "b"]), 2).is_err());
        let tie = table(&[("b", 2), ("a", 2), ("c", 0)]);
        assert_eq!(ids(&gen_pop(&tie, &instance(&[]), 2).unwrap()), ["a", "b"]);
        assert_eq!(tie.normalized(&"c".into()), 0.0);
        assert_eq!(t.normalized(&"b".into()), 2.0 / 3.0);
    }

    proptest! {
        #[test]
        fn counts_ignore_user_order(
            rows in prop::collection::vec(prop::collection::vec(0u8..8, 1..6), 1..8),
            rotate in 0usize..8,
        ) {
            let catalog = Catalog::from_titles(
                (0..8).map(|i| (ItemId::new(format!("i{i}")), format!("T{i}"))),
            ).unwrap();
            let histories: Vec<UserHistory> = rows
                .iter()
                .enumerate()
                .map(|(u, items)| UserHistory {
                    user: format!("u{u}").into(),
                    items: items.iter().map(|i| ItemId::new(format!("i{i}"))).collect(),
                    timestamps: vec![0; items.len()],
                })
                .collect();
            let mut rotated = histories.clone();
            let k = rotate % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
            let a = PopularityTable::from_training(&catalog, &histories);
            let b = PopularityTable::from_training(&catalog, &rotated);
            prop_assert_eq!(a.ranked(), b.ranked());
        }
    }
}
