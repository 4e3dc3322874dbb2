//! NDCG@K for leave-one-out ranking, run averaging, bootstrapped Borda
//! aggregation and report tables.

mod bootstrap;
mod report;

use serde::{Deserialize, Serialize};

use crate::corpus::EvalInstance;
use crate::grounding::{ooc_rate, Ranking};
use crate::ItemId;

pub use bootstrap::{borda, bootstrap_rank, BootstrapOutcome, BootstrapPlan};
pub use report::{format_summary, read_report, write_report, write_run_table, ReportRow, REPORT_VERSION};

pub const DEFAULT_CUTOFFS: [usize; 4] = [1, 5, 10, 20];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cutoff must be at least 1")]
    InvalidCutoff,
    #[error("{instances} instances but {rankings} rankings")]
    Cardinality { instances: usize, rankings: usize },
    #[error("cannot average runs: {0}")]
    Heterogeneous(String),
    #[error("no runs to average")]
    NoRuns,
    #[error("bootstrap needs at least one round")]
    NoRounds,
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// NDCG@k with a single relevant item at 0-based rank `rank`:
/// `1 / log2(rank + 2)` inside the cutoff, 0 outside or when absent.
pub fn ndcg_from_rank(rank: Option<usize>, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidCutoff);
    }
    Ok(match rank {
        Some(r) if r < k => 1.0 / ((r + 2) as f64).log2(),
        _ => 0.0,
    })
}

pub fn ndcg_at_k(ranking: &[ItemId], ground_truth: &ItemId, k: usize) -> Result<f64, EvalError> {
    ndcg_from_rank(ranking.iter().position(|x| x == ground_truth), k)
}

/// Per-cutoff NDCG in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cutoffs: Vec<usize>,
    pub mean: Vec<f64>,
    /// Sample standard deviation across runs (0 for a single run).
    pub std: Vec<f64>,
    /// Each run's per-cutoff value.
    pub per_run: Vec<Vec<f64>>,
    pub runs: usize,
    pub users: usize,
    pub ooc_rate: f64,
    pub fingerprint: String,
}

impl EvalReport {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.cutoffs.iter().position(|&c| c == k).map(|i| self.mean[i])
    }

    pub fn std_at(&self, k: usize) -> Option<f64> {
        self.cutoffs.iter().position(|&c| c == k).map(|i| self.std[i])
    }
}

/// Mean NDCG over users for one run. `rankings[i]` ranks `instances[i]`.
pub fn evaluate(
    instances: &[EvalInstance],
    rankings: &[Ranking],
    cutoffs: &[usize],
    fingerprint: &str,
) -> Result<EvalReport, EvalError> {
    if instances.len() != rankings.len() {
        return Err(EvalError::Cardinality {
            instances: instances.len(),
            rankings: rankings.len(),
        });
    }
    if cutoffs.contains(&0) {
        return Err(EvalError::InvalidCutoff);
    }
    let mut sums = vec![0.0; cutoffs.len()];
    for (inst, r) in instances.iter().zip(rankings) {
        let rank = r.items.iter().position(|x| *x == inst.ground_truth);
        for (s, &k) in sums.iter_mut().zip(cutoffs) {
            *s += ndcg_from_rank(rank, k)?;
        }
    }
    let n = instances.len().max(1) as f64;
    let mean: Vec<f64> = sums.iter().map(|s| 100.0 * s / n).collect();
    Ok(EvalReport {
        cutoffs: cutoffs.to_vec(),
        std: vec![0.0; cutoffs.len()],
        per_run: vec![mean.clone()],
        mean,
        runs: 1,
        users: instances.len(),
        ooc_rate: ooc_rate(rankings),
        fingerprint: fingerprint.to_string(),
    })
}

/// Mean and sample standard deviation across repeat runs of one
/// configuration.
pub fn average_runs(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    let first = reports.first().ok_or(EvalError::NoRuns)?;
    for r in &reports[1..] {
        if r.fingerprint != first.fingerprint {
            return Err(EvalError::Heterogeneous(format!(
                "fingerprint {} vs {}",
                r.fingerprint, first.fingerprint
            )));
        }
        if r.cutoffs != first.cutoffs || r.users != first.users {
            return Err(EvalError::Heterogeneous("cutoffs or user counts differ".into()));
        }
    }
    let per_run: Vec<Vec<f64>> = reports.iter().flat_map(|r| r.per_run.iter().cloned()).collect();
    let n = per_run.len() as f64;
    let mut mean = vec![0.0; first.cutoffs.len()];
    let mut std = vec![0.0; first.cutoffs.len()];
    for c in 0..first.cutoffs.len() {
        mean[c] = per_run.iter().map(|r| r[c]).sum::<f64>() / n;
        if per_run.len() > 1 {
            let ss: f64 = per_run.iter().map(|r| (r[c] - mean[c]).powi(2)).sum();
            std[c] = (ss / (n - 1.0)).sqrt();
        }
    }
    let ooc = reports.iter().map(|r| r.ooc_rate * r.runs as f64).sum::<f64>() / n;
    Ok(EvalReport {
        cutoffs: first.cutoffs.clone(),
        mean,
        std,
        runs: per_run.len(),
        per_run,
        users: first.users,
        ooc_rate: ooc,
        fingerprint: first.fingerprint.clone(),
    })
}
