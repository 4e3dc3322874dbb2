use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{build_histories, Interaction};

/// Dataset summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    /// `1 - interactions / (users * items)`, in percent.
    pub sparsity_pct: f64,
    /// Mean over users of `min(|history| - 1, max_history)`: the length of
    /// the history shown to the ranker for the held-out interaction.
    pub avg_history_len: f64,
    pub max_history: usize,
}

impl CorpusStats {
    pub fn compute(interactions: &[Interaction], max_history: usize) -> Self {
        let items: HashSet<_> = interactions.iter().map(|x| &x.item).collect();
        let histories = build_histories(interactions);
        let users = histories.len();
        let cells = users as f64 * items.len() as f64;
        let sparsity_pct = if cells > 0.0 {
            100.0 * (1.0 - interactions.len() as f64 / cells)
        } else {
            0.0
        };
        let shown: usize = histories
            .iter()
            .map(|h| h.len().saturating_sub(1).min(max_history))
            .sum();
        let avg_history_len = if users > 0 {
            shown as f64 / users as f64
        } else {
            0.0
        };
        CorpusStats {
            users,
            items: items.len(),
            interactions: interactions.len(),
            sparsity_pct,
            avg_history_len,
            max_history,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_sparsity() {
        let data = vec![
            Interaction::new("u1", "a", 1),
            Interaction::new("u1", "b", 2),
            Interaction::new("u1", "c", 3),
            Interaction::new("u2", "a", 1),
        ];
        let s = CorpusStats::compute(&data, 1);
        assert_eq!((s.users, s.items, s.interactions), (2, 3, 4));
        assert!((s.sparsity_pct - 100.0 * (1.0 - 4.0 / 6.0)).abs() < 1e-12);
        // u1 shows min(2, 1) = 1, u2 shows 0
        assert_eq!(s.avg_history_len, 0.5);
    }

    #[test]
    fn empty_corpus() {
        let s = CorpusStats::compute(&[], 50);
        assert_eq!(s.users, 0);
        assert_eq!(s.sparsity_pct, 0.0);
    }
}
