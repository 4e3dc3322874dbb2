use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::candgen::CandidateSet;
use crate::grounding::{ParseDiagnostics, Ranking};
use crate::seed::{self, Part};
use crate::ItemId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    /// Number of ranking rounds, at least 1.
    pub rounds: usize,
    pub seed: u64,
}

impl BootstrapPlan {
    /// Candidate arrangement for `round`: the base arrangement for round 0,
    /// a seeded shuffle for later rounds.
    pub fn arrangement(&self, base: &CandidateSet, round: usize) -> CandidateSet {
        if round == 0 {
            base.clone()
        } else {
            base.shuffled(seed::derive(self.seed, &[Part::Str("bootstrap"), Part::from(round)]))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapOutcome {
    /// Aggregated ranking; `slots` refer to the base arrangement.
    pub ranking: Ranking,
    pub rounds: Vec<Ranking>,
    pub unparseable_rounds: usize,
}

/// Borda aggregation. `positions[r][i]` is the 1-based rank of candidate
/// `i` in round `r`; candidate `i` scores `sum_r (m - positions[r][i])`.
/// Returns candidate indices best first, ties broken by the first round's
/// position and then by index.
pub fn borda(m: usize, positions: &[Vec<usize>]) -> Vec<usize> {
    let mut score = vec![0usize; m];
    for round in positions {
        for (i, &p) in round.iter().enumerate() {
            score[i] += m - p;
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        score[b]
            .cmp(&score[a])
            .then(positions[0][a].cmp(&positions[0][b]))
            .then(a.cmp(&b))
    });
    order
}

/// Ranks `plan.rounds` arrangements of `set` with `rank_once` and merges
/// the rounds by [`borda`].
///
/// `rank_once` receives the arranged set and the round number and must
/// return a ranking of that arrangement's items. An unparseable round still
/// contributes, through the parser's slot-order fallback.
pub fn bootstrap_rank<E, F>(
    set: &CandidateSet,
    plan: &BootstrapPlan,
    mut rank_once: F,
) -> Result<BootstrapOutcome, E>
where
    E: From<EvalError>,
    F: FnMut(&CandidateSet, usize) -> Result<Ranking, E>,
{
    if plan.rounds == 0 {
        return Err(EvalError::NoRounds.into());
    }
    let m = set.len();
    let base_index: HashMap<&ItemId, usize> =
        set.items().iter().enumerate().map(|(i, id)| (id, i)).collect();
    let mut rounds = Vec::with_capacity(plan.rounds);
    let mut positions = Vec::with_capacity(plan.rounds);
    for r in 0..plan.rounds {
        let arranged = plan.arrangement(set, r);
        let ranking = rank_once(&arranged, r)?;
        let mut pos = vec![0usize; m];
        for (rank, item) in ranking.items.iter().enumerate() {
            let i = *base_index.get(item).expect("ranking covers the candidate set");
            pos[i] = rank + 1;
        }
        assert!(pos.iter().all(|&p| p > 0), "ranking is a permutation");
        positions.push(pos);
        rounds.push(ranking);
    }
    let order = borda(m, &positions);

    let mut diagnostics = ParseDiagnostics {
        unparseable: true,
        ..Default::default()
    };
    for r in &rounds {
        let d = &r.diagnostics;
        diagnostics.lines += d.lines;
        diagnostics.ooc_lines += d.ooc_lines;
        diagnostics.duplicates += d.duplicates;
        diagnostics.ooc_indices += d.ooc_indices;
        diagnostics.collisions = diagnostics.collisions.max(d.collisions);
        diagnostics.unparseable &= d.unparseable;
    }
    let unparseable_rounds = rounds.iter().filter(|r| r.diagnostics.unparseable).count();
    let plan_matched: usize = rounds.iter().map(|r| r.diagnostics.matched).sum();
    diagnostics.matched = plan_matched / plan.rounds;
    diagnostics.unmatched_candidates = m - diagnostics.matched;

    let items = order.iter().map(|&i| set.items()[i].clone()).collect::<Vec<_>>();
    let gt_rank = set.ground_truth().and_then(|g| items.iter().position(|x| x == g));
    Ok(BootstrapOutcome {
        ranking: Ranking {
            items,
            slots: order,
            diagnostics,
            gt_rank,
        },
        rounds,
        unparseable_rounds,
    })
}
