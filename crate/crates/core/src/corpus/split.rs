use std::collections::HashMap;

use rand::seq::index;

use super::{CorpusError, EvalInstance, Interaction, UserHistory};
use crate::seed;
use crate::UserId;

/// Groups interactions per user and sorts each group by timestamp, oldest
/// first. Equal timestamps keep input order. Users appear in order of first
/// occurrence.
pub fn build_histories(interactions: &[Interaction]) -> Vec<UserHistory> {
    let mut slot: HashMap<&UserId, usize> = HashMap::new();
    let mut groups: Vec<Vec<&Interaction>> = Vec::new();
    for x in interactions {
        let i = *slot.entry(&x.user).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[i].push(x);
    }
    groups
        .into_iter()
        .map(|mut group| {
            group.sort_by_key(|x| x.timestamp);
            UserHistory {
                user: group[0].user.clone(),
                items: group.iter().map(|x| x.item.clone()).collect(),
                timestamps: group.iter().map(|x| x.timestamp).collect(),
            }
        })
        .collect()
}

/// Result of [`leave_one_out`].
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub instances: Vec<EvalInstance>,
    /// Users with fewer than two interactions.
    pub excluded: Vec<UserId>,
}

/// Holds out the last interaction of every history as ground truth.
pub fn leave_one_out(histories: &[UserHistory]) -> SplitOutcome {
    let mut instances = Vec::with_capacity(histories.len());
    let mut excluded = Vec::new();
    for h in histories {
        if h.len() < 2 {
            excluded.push(h.user.clone());
            continue;
        }
        let n = h.len() - 1;
        instances.push(EvalInstance {
            user: h.user.clone(),
            prefix: UserHistory {
                user: h.user.clone(),
                items: h.items[..n].to_vec(),
                timestamps: h.timestamps[..n].to_vec(),
            },
            ground_truth: h.items[n].clone(),
        });
    }
    if !excluded.is_empty() {
        log::warn!(
            "leave-one-out: excluded {} users with fewer than two interactions",
            excluded.len()
        );
    }
    SplitOutcome {
        instances,
        excluded,
    }
}

/// The training side of a leave-one-out split: every instance's prefix.
pub fn training_histories(instances: &[EvalInstance]) -> Vec<UserHistory> {
    instances.iter().map(|x| x.prefix.clone()).collect()
}

/// Uniform sample of `n` instances without replacement, reproducible from
/// `seed`. The sample keeps population order.
pub fn sample_users(
    instances: &[EvalInstance],
    n: usize,
    seed: u64,
) -> Result<Vec<EvalInstance>, CorpusError> {
    if n > instances.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            population: instances.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let mut picked = index::sample(&mut rng, instances.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| instances[i].clone()).collect())
}
