//! Candidate generation.
//!
//! Each generator returns a [`CandidateSet`] in its own rank order (best
//! first); callers that need an unordered prompt arrangement shuffle it.
//! [`fuse_candidates`] merges several generators' heads into one set.

mod bm25;
mod bpr;
mod fuse;
mod io;
mod markov;
mod pop;
mod random;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{ItemId, UserId};

pub use bm25::{gen_bm25, Bm25Index, Bm25Params};
pub use bpr::{gen_bprmf, train_bprmf, BprParams, MfModel, TrainLog};
pub use fuse::fuse_candidates;
pub use io::{load_versioned, read_candidates, save_versioned, write_candidates};
pub use markov::{gen_markov, MarkovModel};
pub use pop::{gen_pop, PopularityTable};
pub use random::{gen_random, RandomOptions};

#[derive(Debug, thiserror::Error)]
pub enum CandGenError {
    #[error("need {needed} distinct eligible items, only {available} available")]
    InsufficientItems { needed: usize, available: usize },
    #[error("candidate set must hold at least 2 items, got {0}")]
    TooSmall(usize),
    #[error("duplicate candidate {0}")]
    Duplicate(ItemId),
    #[error("generator list {index} has {len} items, fewer than top_k = {top_k}")]
    ShortList { index: usize, len: usize, top_k: usize },
    #[error("slot {slot} out of range for {m} candidates")]
    SlotOutOfRange { slot: usize, m: usize },
    #[error("ground truth is not in the candidate set")]
    GroundTruthAbsent,
    #[error("BPR training diverged at epoch {epoch} (non-finite parameter; learning rate {learning_rate} too high?)")]
    Diverged { epoch: usize, learning_rate: f64 },
    #[error("no training interactions")]
    EmptyTraining,
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which generator proposed a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GroundTruth,
    Random,
    Pop,
    Bm25,
    Bprmf,
    Markov,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::GroundTruth => "ground_truth",
            Provenance::Random => "random",
            Provenance::Pop => "pop",
            Provenance::Bm25 => "bm25",
            Provenance::Bprmf => "bprmf",
            Provenance::Markov => "markov",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ground_truth" => Provenance::GroundTruth,
            "random" => Provenance::Random,
            "pop" => Provenance::Pop,
            "bm25" => Provenance::Bm25,
            "bprmf" => Provenance::Bprmf,
            "markov" => Provenance::Markov,
            other => return Err(format!("unknown generator {other:?}")),
        })
    }
}

/// An ordered, duplicate-free list of candidates for one user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub user: UserId,
    items: Vec<ItemId>,
    sources: Vec<Provenance>,
    gt_slot: Option<usize>,
}

impl CandidateSet {
    /// Validates uniqueness and size, and locates the ground truth if given.
    pub fn new(
        user: UserId,
        items: Vec<ItemId>,
        sources: Vec<Provenance>,
        ground_truth: Option<&ItemId>,
    ) -> Result<Self, CandGenError> {
        assert_eq!(items.len(), sources.len(), "one provenance tag per item");
        if items.len() < 2 {
            return Err(CandGenError::TooSmall(items.len()));
        }
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            if !seen.insert(item) {
                return Err(CandGenError::Duplicate(item.clone()));
            }
        }
        let gt_slot = ground_truth.and_then(|gt| items.iter().position(|x| x == gt));
        Ok(CandidateSet {
            user,
            items,
            sources,
            gt_slot,
        })
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn sources(&self) -> &[Provenance] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn gt_slot(&self) -> Option<usize> {
        self.gt_slot
    }

    pub fn ground_truth_present(&self) -> bool {
        self.gt_slot.is_some()
    }

    pub fn ground_truth(&self) -> Option<&ItemId> {
        self.gt_slot.map(|s| &self.items[s])
    }

    pub fn contains(&self, item: &ItemId) -> bool {
        self.items.contains(item)
    }

    /// Uniformly shuffled copy, reproducible from `seed`.
    pub fn shuffled(&self, seed: u64) -> CandidateSet {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.shuffle(&mut seed::rng(seed));
        self.permuted(&order)
    }

    /// Copy whose slot `s` holds the item previously at `order[s]`.
    pub fn permuted(&self, order: &[usize]) -> CandidateSet {
        assert_eq!(order.len(), self.items.len());
        let items: Vec<ItemId> = order.iter().map(|&i| self.items[i].clone()).collect();
        let sources = order.iter().map(|&i| self.sources[i]).collect();
        let gt_slot = self.gt_slot.and_then(|g| order.iter().position(|&i| i == g));
        CandidateSet {
            user: self.user.clone(),
            items,
            sources,
            gt_slot,
        }
    }

    /// Copy with the ground truth moved to `slot`; all other candidates keep
    /// their relative order.
    pub fn with_gt_at(&self, slot: usize) -> Result<CandidateSet, CandGenError> {
        let from = self.gt_slot.ok_or(CandGenError::GroundTruthAbsent)?;
        if slot >= self.items.len() {
            return Err(CandGenError::SlotOutOfRange {
                slot,
                m: self.items.len(),
            });
        }
        let mut order: Vec<usize> = (0..self.items.len()).filter(|&i| i != from).collect();
        order.insert(slot, from);
        Ok(self.permuted(&order))
    }
}

/// Ground truth plus the first `m - 1` non-ground-truth items of a
/// generator's ranked list, shuffled by `seed`. This is the hard-negative
/// setting: negatives come from one retriever and the target is always
/// present.
pub fn hard_negative_set(
    ranked: &CandidateSet,
    ground_truth: &ItemId,
    m: usize,
    seed: u64,
) -> Result<CandidateSet, CandGenError> {
    let mut items = vec![ground_truth.clone()];
    let mut sources = vec![Provenance::GroundTruth];
    for (item, src) in ranked.items.iter().zip(&ranked.sources) {
        if items.len() == m {
            break;
        }
        if item != ground_truth {
            items.push(item.clone());
            sources.push(*src);
        }
    }
    if items.len() < m {
        return Err(CandGenError::InsufficientItems {
            needed: m,
            available: items.len(),
        });
    }
    Ok(CandidateSet::new(ranked.user.clone(), items, sources, Some(ground_truth))?.shuffled(seed))
}

/// Sorts `(item, score)` pairs by descending score, then ascending item id,
/// and returns the first `m` not rejected by `exclude`.
pub(crate) fn top_m<'a>(
    scored: impl Iterator<Item = (&'a ItemId, f64)>,
    m: usize,
    exclude: impl Fn(&ItemId) -> bool,
) -> Vec<(ItemId, f64)> {
    let mut all: Vec<(&ItemId, f64)> = scored.filter(|(id, _)| !exclude(id)).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    all.into_iter().take(m).map(|(id, s)| (id.clone(), s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str], gt: Option<&str>) -> CandidateSet {
        let items: Vec<ItemId> = items.iter().map(|&s| s.into()).collect();
        let sources = vec![Provenance::Random; items.len()];
        let gt = gt.map(ItemId::from);
        CandidateSet::new("u".into(), items, sources, gt.as_ref()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(matches!(
            CandidateSet::new("u".into(), vec!["a".into()], vec![Provenance::Pop], None),
            Err(CandGenError::TooSmall(1))
        ));
        assert!(matches!(
            CandidateSet::new(
                "u".into(),
                vec!["a".into(), "a".into()],
                vec![Provenance::Pop; 2],
                None
            ),
            Err(CandGenError::Duplicate(_))
        ));
        let s = set(&["a", "b", "c"], Some("b"));
        assert_eq!(s.gt_slot(), Some(1));
        assert_eq!(set(&["a", "b"], Some("z")).gt_slot(), None);
    }

    #[test]
    fn move_ground_truth_to_slot() {
        let s = set(&["a", "b", "c", "d"], Some("b"));
        let moved = s.with_gt_at(3).unwrap();
        assert_eq!(moved.items(), &["a", "c", "d", "b"].map(ItemId::from));
        assert_eq!(moved.gt_slot(), Some(3));
        assert!(matches!(
            s.with_gt_at(4),
            Err(CandGenError::SlotOutOfRange { .. })
        ));
        assert!(set(&["a", "b"], None).with_gt_at(0).is_err());
    }

    #[test]
    fn hard_negatives_skip_ground_truth() {
        let ranked = set(&["x", "gt", "y", "z"], None);
        let hn = hard_negative_set(&ranked, &"gt".into(), 3, 5).unwrap();
        let mut items: Vec<&str> = hn.items().iter().map(ItemId::as_str).collect();
        items.sort();
        assert_eq!(items, ["gt", "x", "y"]);
        assert_eq!(hn.ground_truth().map(ItemId::as_str), Some("gt"));
        assert!(hard_negative_set(&ranked, &"gt".into(), 5, 5).is_err());
    }

    proptest! {
        #[test]
        fn shuffle_is_a_reproducible_permutation(n in 2usize..30, seed in any::<u64>()) {
            let names: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let s = set(&refs, Some("i0"));
            let a = s.shuffled(seed);
            prop_assert_eq!(&a, &s.shuffled(seed));
            let mut sorted = a.items().to_vec();
            sorted.sort();
            let mut orig = s.items().to_vec();
            orig.sort();
            prop_assert_eq!(sorted, orig);
            prop_assert_eq!(a.ground_truth(), Some(&ItemId::from("i0")));
        }
    }
}
