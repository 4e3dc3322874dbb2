//! Position and popularity bias measurements over parsed rankings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candgen::{CandGenError, CandidateSet, PopularityTable};
use crate::corpus::EvalInstance;
use crate::grounding::Ranking;
use crate::rankeval::ndcg_from_rank;
use crate::UserId;

pub const DEFAULT_PROBE_SLOTS: [usize; 5] = [0, 5, 10, 15, 19];

pub const DEFAULT_HISTORY_LENGTHS: [usize; 10] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50];

#[derive(Debug, thiserror::Error)]
pub enum BiasError {
    #[error("probe slot {slot} out of range for {m} candidates")]
    SlotOutOfRange { slot: usize, m: usize },
    #[error("user {0} has no ground-truth candidate to move")]
    GroundTruthAbsent(UserId),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn write(path: &Path, text: String) -> Result<(), BiasError> {
    fs::write(path, text).map_err(|source| BiasError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `(x, y)` pairs as a two-column table.
pub fn write_series(path: &Path, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> Result<(), BiasError> {
    let mut out = format!("{xlabel}\t{ylabel}\n");
    for (x, y) in points {
        writeln!(out, "{x}\t{y:.6}").unwrap();
    }
    write(path, out)
}

/// NDCG per forced ground-truth slot, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionProbeReport {
    pub slots: Vec<usize>,
    pub cutoffs: Vec<usize>,
    /// `ndcg[i][c]`: mean NDCG@`cutoffs[c]` with the ground truth at `slots[i]`.
    pub ndcg: Vec<Vec<f64>>,
    pub users: Vec<usize>,
}

impl PositionProbeReport {
    pub fn at(&self, slot: usize, k: usize) -> Option<f64> {
        let s = self.slots.iter().position(|&x| x == slot)?;
        let c = self.cutoffs.iter().position(|&x| x == k)?;
        Some(self.ndcg[s][c])
    }

    /// The curve over slots at cutoff `k`.
    pub fn series(&self, k: usize) -> Vec<(f64, f64)> {
        self.slots
            .iter()
            .filter_map(|&s| Some((s as f64, self.at(s, k)?)))
            .collect()
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), BiasError> {
        let mut out = String::from("slot\tcutoff\tndcg\tusers\n");
        for (i, slot) in self.slots.iter().enumerate() {
            for (c, k) in self.cutoffs.iter().enumerate() {
                writeln!(out, "{slot}\t{k}\t{:.4}\t{}", self.ndcg[i][c], self.users[i]).unwrap();
            }
        }
        write(path, out)
    }
}

/// Ranks every user's candidate set once per probe slot, with the ground
/// truth moved to that slot and every other candidate keeping its relative
/// order. `rank` receives the instance, the arranged set and the slot.
pub fn position_probe<E, F>(
    cases: &[(EvalInstance, CandidateSet)],
    slots: &[usize],
    cutoffs: &[usize],
    rank: F,
) -> Result<PositionProbeReport, E>
where
    E: From<BiasError> + Send,
    F: Fn(&EvalInstance, &CandidateSet, usize) -> Result<Ranking, E> + Sync,
{
    for (inst, set) in cases {
        for &slot in slots {
            if slot >= set.len() {
                return Err(BiasError::SlotOutOfRange { slot, m: set.len() }.into());
            }
        }
        if !set.ground_truth_present() {
            return Err(BiasError::GroundTruthAbsent(inst.user.clone()).into());
        }
    }
    let mut ndcg = Vec::with_capacity(slots.len());
    let mut users = Vec::with_capacity(slots.len());
    for &slot in slots {
        let rankings: Vec<Ranking> = cases
            .par_iter()
            .map(|(inst, set)| {
                let moved = set.with_gt_at(slot).map_err(|e| match e {
                    CandGenError::SlotOutOfRange { slot, m } => BiasError::SlotOutOfRange { slot, m },
                    _ => BiasError::GroundTruthAbsent(inst.user.clone()),
                })?;
                rank(inst, &moved, slot)
            })
            .collect::<Result<_, E>>()?;
        let mut sums = vec![0.0; cutoffs.len()];
        for ((inst, _), r) in cases.iter().zip(&rankings) {
            let pos = r.items.iter().position(|x| *x == inst.ground_truth);
            for (s, &k) in sums.iter_mut().zip(cutoffs) {
                *s += ndcg_from_rank(pos, k).unwrap_or(0.0);
            }
        }
        let n = cases.len().max(1) as f64;
        ndcg.push(sums.iter().map(|s| 100.0 * s / n).collect());
        users.push(cases.len());
    }
    Ok(PositionProbeReport {
        slots: slots.to_vec(),
        cutoffs: cutoffs.to_vec(),
        ndcg,
        users,
    })
}

/// Mean normalized training popularity of the item at each ranked
/// position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityProfile {
    pub mean_popularity: Vec<f64>,
    /// Rankings contributing to each position.
    pub counts: Vec<usize>,
}

impl PopularityProfile {
    pub fn series(&self) -> Vec<(f64, f64)> {
        self.mean_popularity
            .iter()
            .enumerate()
            .map(|(i, &p)| ((i + 1) as f64, p))
            .collect()
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), BiasError> {
        let mut out = String::from("rank\tmean_popularity\tusers\n");
        for (i, (p, n)) in self.mean_popularity.iter().zip(&self.counts).enumerate() {
            writeln!(out, "{}\t{p:.6}\t{n}", i + 1).unwrap();
        }
        write(path, out)
    }
}

pub fn popularity_by_rank<'a>(
    rankings: impl IntoIterator<Item = &'a Ranking>,
    popularity: &PopularityTable,
) -> PopularityProfile {
    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for r in rankings {
        if r.items.len() > sums.len() {
            sums.resize(r.items.len(), 0.0);
            counts.resize(r.items.len(), 0);
        }
        for (i, item) in r.items.iter().enumerate() {
            sums[i] += popularity.normalized(item);
            counts[i] += 1;
        }
    }
    let mean_popularity = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    PopularityProfile {
        mean_popularity,
        counts,
    }
}

/// Mean popularity of the top-ranked item at each history length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryLengthCurve {
    pub lengths: Vec<usize>,
    pub top1_popularity: Vec<f64>,
    pub users: usize,
    /// Users whose prefix was shorter than the requested length, per length.
    pub short_users: Vec<usize>,
}

impl HistoryLengthCurve {
    pub fn series(&self) -> Vec<(f64, f64)> {
        self.lengths
            .iter()
            .zip(&self.top1_popularity)
            .map(|(&l, &p)| (l as f64, p))
            .collect()
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), BiasError> {
        let mut out = String::from("history_len\ttop1_popularity\tusers\tshort_users\n");
        for ((l, p), s) in self.lengths.iter().zip(&self.top1_popularity).zip(&self.short_users) {
            writeln!(out, "{l}\t{p:.6}\t{}\t{s}", self.users).unwrap();
        }
        write(path, out)
    }
}

/// Ranks every user with the prefix cut to its last `len` items for each
/// length. Prefixes shorter than `len` are used whole and counted.
pub fn popularity_vs_history_len<E, F>(
    cases: &[(EvalInstance, CandidateSet)],
    lengths: &[usize],
    popularity: &PopularityTable,
    rank: F,
) -> Result<HistoryLengthCurve, E>
where
    E: Send,
    F: Fn(&EvalInstance, &CandidateSet, usize) -> Result<Ranking, E> + Sync,
{
    let mut top1 = Vec::with_capacity(lengths.len());
    let mut short = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let n_short = cases.iter().filter(|(i, _)| i.prefix.len() < len).count();
        if n_short > 0 {
            log::info!("history length {len}: {n_short} users have shorter prefixes");
        }
        let rankings: Vec<Ranking> = cases
            .par_iter()
            .map(|(inst, set)| {
                let cut = EvalInstance {
                    user: inst.user.clone(),
                    prefix: inst.prefix.last_n(len),
                    ground_truth: inst.ground_truth.clone(),
                };
                rank(&cut, set, len)
            })
            .collect::<Result<_, E>>()?;
        let sum: f64 = rankings
            .iter()
            .filter_map(|r| r.items.first())
            .map(|id| popularity.normalized(id))
            .sum();
        top1.push(sum / cases.len().max(1) as f64);
        short.push(n_short);
    }
    Ok(HistoryLengthCurve {
        lengths: lengths.to_vec(),
        top1_popularity: top1,
        users: cases.len(),
        short_users: short,
    })
}
