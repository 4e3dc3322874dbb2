use std::collections::HashMap;

use super::{CorpusError, Interaction};
use crate::{ItemId, UserId};

/// Iterative k-core filter: repeatedly drops users and items with fewer than
/// `k` interactions until every survivor meets the threshold. Input order is
/// preserved.
pub fn kcore_filter(interactions: &[Interaction], k: usize) -> Result<Vec<Interaction>, CorpusError> {
    if k == 0 {
        return Err(CorpusError::InvalidK);
    }
    let mut current: Vec<Interaction> = interactions.to_vec();
    loop {
        let mut users: HashMap<&UserId, usize> = HashMap::new();
        let mut items: HashMap<&ItemId, usize> = HashMap::new();
        for x in &current {
            *users.entry(&x.user).or_default() += 1;
            *items.entry(&x.item).or_default() += 1;
        }
        let keep: Vec<bool> = current
            .iter()
            .map(|x| users[&x.user] >= k && items[&x.item] >= k)
            .collect();
        if keep.iter().all(|&b| b) {
            break;
        }
        let mut flags = keep.into_iter();
        current.retain(|_| flags.next().expect("one flag per interaction"));
    }
    if current.is_empty() && !interactions.is_empty() {
        log::warn!("{k}-core filter removed every interaction");
    }
    Ok(current)
}
