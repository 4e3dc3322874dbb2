use std::collections::HashSet;

use rand::seq::index;

use super::{CandGenError, CandidateSet, Provenance};
use crate::corpus::{Catalog, EvalInstance};
use crate::seed;
use crate::ItemId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomOptions {
    pub m: usize,
    /// Guarantee the ground truth and draw `m - 1` negatives around it.
    pub include_gt: bool,
    /// Never draw items from the user's history prefix.
    pub exclude_history: bool,
}

impl RandomOptions {
    pub fn with_ground_truth(m: usize) -> Self {
        RandomOptions {
            m,
            include_gt: true,
            exclude_history: true,
        }
    }
}

/// Uniformly sampled candidates, shuffled by `seed`.
///
/// With `include_gt` the set is the ground truth plus `m - 1` distinct
/// negatives that are never the ground truth; otherwise it is `m` uniform
/// items from the catalog.
pub fn gen_random(
    catalog: &Catalog,
    instance: &EvalInstance,
    opts: RandomOptions,
    seed: u64,
) -> Result<CandidateSet, CandGenError> {
    let history: HashSet<&ItemId> = if opts.exclude_history {
        instance.prefix.items.iter().collect()
    } else {
        HashSet::new()
    };
    let gt = &instance.ground_truth;
    let pool: Vec<&ItemId> = catalog
        .ids()
        .filter(|id| !history.contains(id))
        .filter(|id| !(opts.include_gt && *id == gt))
        .collect();
    let draws = if opts.include_gt {
        opts.m.saturating_sub(1)
    } else {
        opts.m
    };
    if pool.len() < draws || opts.m < 2 {
        return Err(CandGenError::InsufficientItems {
            needed: opts.m,
            available: pool.len() + usize::from(opts.include_gt),
        });
    }
    let mut rng = seed::rng(seed);
    let mut picked = index::sample(&mut rng, pool.len(), draws).into_vec();
    picked.sort_unstable();

    let mut items = Vec::with_capacity(opts.m);
    let mut sources = Vec::with_capacity(opts.m);
    if opts.include_gt {
        items.push(gt.clone());
        sources.push(Provenance::GroundTruth);
    }
    for i in picked {
        items.push(pool[i].clone());
        sources.push(Provenance::Random);
    }
    let set = CandidateSet::new(instance.user.clone(), items, sources, Some(gt))?;
    Ok(set.shuffled(seed::derive(seed, &["shuffle".into()])))
}
