//! Interaction corpora: loading, filtering, chronological histories and
//! leave-one-out evaluation splits.

mod amazon;
mod filter;
mod ml1m;
mod split;
mod stats;
pub mod synthetic;
mod tsv;

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::{ItemId, UserId};

pub use amazon::load_amazon;
pub use filter::kcore_filter;
pub use ml1m::{display_title, load_ml1m};
pub use split::{build_histories, leave_one_out, sample_users, training_histories, SplitOutcome};
pub use stats::CorpusStats;
pub use tsv::{read_corpus, write_corpus, INTERACTIONS_FILE, ITEMS_FILE};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: rating references unknown movie {item}")]
    UnknownItem {
        path: PathBuf,
        line: usize,
        item: ItemId,
    },
    #[error("duplicate item id {0} in catalog")]
    DuplicateItem(ItemId),
    #[error("item {0} has an empty title")]
    EmptyTitle(ItemId),
    #[error("cannot sample {requested} users from a population of {population}")]
    SampleTooLarge { requested: usize, population: usize },
    #[error("k-core threshold must be at least 1")]
    InvalidK,
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub title: String,
    /// Interaction count in the training split (0 until assigned).
    pub popularity: u64,
}

/// Item catalog with id lookup. Iteration order is insertion order.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    items: Vec<Item>,
    index: HashMap<ItemId, usize>,
    max_popularity: u64,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an item; ids must be unique and titles non-empty after trimming.
    pub fn insert(&mut self, id: ItemId, title: impl Into<String>) -> Result<(), CorpusError> {
        let title = title.into();
        if title.trim().is_empty() {
            return Err(CorpusError::EmptyTitle(id));
        }
        if self.index.contains_key(&id) {
            return Err(CorpusError::DuplicateItem(id));
        }
        self.index.insert(id.clone(), self.items.len());
        self.items.push(Item {
            id,
            title,
            popularity: 0,
        });
        Ok(())
    }

    pub fn from_titles<I, S>(pairs: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (ItemId, S)>,
        S: Into<String>,
    {
        let mut catalog = Catalog::new();
        for (id, title) in pairs {
            catalog.insert(id, title)?;
        }
        Ok(catalog)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &ItemId) -> Option<&Item> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.index.contains_key(id)
    }

    pub fn title(&self, id: &ItemId) -> Option<&str> {
        self.get(id).map(|item| item.title.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Item> {
        self.items.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ItemId> {
        self.items.iter().map(|item| &item.id)
    }

    /// Position of `id` in insertion order.
    pub fn position(&self, id: &ItemId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn popularity(&self, id: &ItemId) -> u64 {
        self.get(id).map_or(0, |item| item.popularity)
    }

    pub fn max_popularity(&self) -> u64 {
        self.max_popularity
    }

    /// Popularity divided by the maximum training popularity, in `[0, 1]`.
    pub fn normalized_popularity(&self, id: &ItemId) -> f64 {
        if self.max_popularity == 0 {
            return 0.0;
        }
        self.popularity(id) as f64 / self.max_popularity as f64
    }

    /// Recomputes popularity from training histories. Items absent from the
    /// catalog are ignored.
    pub fn assign_popularity(&mut self, training: &[UserHistory]) {
        for item in &mut self.items {
            item.popularity = 0;
        }
        for history in training {
            for id in &history.items {
                if let Some(&i) = self.index.get(id) {
                    self.items[i].popularity += 1;
                }
            }
        }
        self.max_popularity = self.items.iter().map(|i| i.popularity).max().unwrap_or(0);
    }

    /// Keeps only the items accepted by `keep`, preserving order.
    pub fn retain(&mut self, mut keep: impl FnMut(&Item) -> bool) {
        self.items.retain(|item| keep(item));
        self.index = self
            .items
            .iter()
            .enumerate()
            .map(|(i, item)| (item.id.clone(), i))
            .collect();
        self.max_popularity = self.items.iter().map(|i| i.popularity).max().unwrap_or(0);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(user: impl Into<UserId>, item: impl Into<ItemId>, timestamp: i64) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            timestamp,
        }
    }
}

/// One user's interactions, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserHistory {
    pub user: UserId,
    pub items: Vec<ItemId>,
    pub timestamps: Vec<i64>,
}

impl UserHistory {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The most recent `n` interactions (all of them if shorter).
    pub fn last_n(&self, n: usize) -> UserHistory {
        let start = self.items.len().saturating_sub(n);
        UserHistory {
            user: self.user.clone(),
            items: self.items[start..].to_vec(),
            timestamps: self.timestamps[start..].to_vec(),
        }
    }

    pub fn last(&self) -> Option<&ItemId> {
        self.items.last()
    }
}

/// A leave-one-out evaluation case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub user: UserId,
    /// Full history minus the held-out last interaction.
    pub prefix: UserHistory,
    pub ground_truth: ItemId,
}

/// A loaded dataset before filtering.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub catalog: Catalog,
    pub interactions: Vec<Interaction>,
    /// Records skipped as unparsable.
    pub skipped_records: usize,
    /// Interactions dropped because the item had no usable title.
    pub dropped_untitled: usize,
}
