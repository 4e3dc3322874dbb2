use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{CandGenError, CandidateSet, PopularityTable, Provenance};
use crate::corpus::{EvalInstance, UserHistory};
use crate::ItemId;

/// First-order transition counts between consecutive training items.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkovModel {
    /// Successors of each item, by descending count then ascending id.
    transitions: BTreeMap<ItemId, Vec<(ItemId, u64)>>,
}

impl MarkovModel {
    pub fn from_training(training: &[UserHistory]) -> Self {
        let mut counts: BTreeMap<ItemId, BTreeMap<ItemId, u64>> = BTreeMap::new();
        for h in training {
            for w in h.items.windows(2) {
                *counts
                    .entry(w[0].clone())
                    .or_default()
                    .entry(w[1].clone())
                    .or_default() += 1;
            }
        }
        let transitions = counts
            .into_iter()
            .map(|(from, next)| {
                let mut next: Vec<(ItemId, u64)> = next.into_iter().collect();
                next.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                (from, next)
            })
            .collect();
        MarkovModel { transitions }
    }

    pub fn successors(&self, item: &ItemId) -> &[(ItemId, u64)] {
        self.transitions.get(item).map_or(&[], Vec::as_slice)
    }
}

/// Most frequent successors of the user's last item, topped up with
/// popular items when the transition row is too short.
pub fn gen_markov(
    model: &MarkovModel,
    pop: &PopularityTable,
    instance: &EvalInstance,
    m: usize,
) -> Result<CandidateSet, CandGenError> {
    let history: HashSet<&ItemId> = instance.prefix.items.iter().collect();
    let mut items: Vec<ItemId> = Vec::with_capacity(m);
    if let Some(last) = instance.prefix.last() {
        items.extend(
            model
                .successors(last)
                .iter()
                .filter(|(id, _)| !history.contains(id))
                .take(m)
                .map(|(id, _)| id.clone()),
        );
    }
    let from_chain = items.len();
    if items.len() < m {
        let chosen: HashSet<ItemId> = items.iter().cloned().collect();
        let fill = pop.top(m - items.len(), |id| history.contains(id) || chosen.contains(id));
        items.extend(fill);
    }
    if items.len() < m {
        return Err(CandGenError::InsufficientItems {
            needed: m,
            available: items.len(),
        });
    }
    let sources = (0..m)
        .map(|i| {
            if i < from_chain {
                Provenance::Markov
            } else {
                Provenance::Pop
            }
        })
        .collect();
    CandidateSet::new(
        instance.user.clone(),
        items,
        sources,
        Some(&instance.ground_truth),
    )
}
