use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::artifacts::write_atomic;
use super::stages::{Pipeline, RunStats};
use super::{ExperimentConfig, RunnerError, StageContext};
use crate::biasprobe::{DEFAULT_HISTORY_LENGTHS, DEFAULT_PROBE_SLOTS};
use crate::promptkit::StrategyKind;
use crate::rankeval::ReportRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    HistoryLen,
    CandidateSize,
    GtSlot,
    Strategy,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [
        SweepAxis::HistoryLen,
        SweepAxis::CandidateSize,
        SweepAxis::GtSlot,
        SweepAxis::Strategy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::HistoryLen => "history_len",
            SweepAxis::CandidateSize => "candidate_size",
            SweepAxis::GtSlot => "gt_slot",
            SweepAxis::Strategy => "strategy",
        }
    }

    /// 5..=50 in steps of 5 for the sizes, the probe slots below `m` for
    /// `gt_slot`, and all three strategies.
    pub fn default_values(self, cfg: &ExperimentConfig) -> Vec<String> {
        match self {
            SweepAxis::HistoryLen | SweepAxis::CandidateSize => {
                DEFAULT_HISTORY_LENGTHS.iter().map(|v| v.to_string()).collect()
            }
            SweepAxis::GtSlot => DEFAULT_PROBE_SLOTS
                .iter()
                .filter(|&&s| s < cfg.candidates.m)
                .map(|s| s.to_string())
                .collect(),
            SweepAxis::Strategy => StrategyKind::ALL.iter().map(|k| k.as_str().to_string()).collect(),
        }
    }

    /// Sets the axis to `value` in `cfg` and re-validates.
    /// Leaves `cfg` untouched when the value is rejected.
    pub fn apply(self, cfg: &mut ExperimentConfig, value: &str) -> Result<(), RunnerError> {
        let bad = |e: String| RunnerError::Config(format!("{} = {value:?}: {e}", self.as_str()));
        let num = || value.parse::<usize>().map_err(|e| bad(e.to_string()));
        let mut next = cfg.clone();
        match self {
            SweepAxis::HistoryLen => next.prompt.max_history = num()?,
            SweepAxis::CandidateSize => next.candidates.m = num()?,
            SweepAxis::GtSlot => next.candidates.gt_slot = Some(num()?),
            SweepAxis::Strategy => next.prompt.strategy = value.parse().map_err(bad)?,
        }
        next.validate().map_err(|e| bad(e.to_string()))?;
        *cfg = next;
        Ok(())
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown sweep axis {s:?} (expected history_len, candidate_size, gt_slot or strategy)"))
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub axis: SweepAxis,
    /// One `(value, report rows)` pair per axis value.
    pub points: Vec<(String, Vec<ReportRow>)>,
    pub stats: RunStats,
    pub table: PathBuf,
}

/// Runs prepare through eval once per axis value. Caches are shared, so
/// stages an axis does not touch are computed once. Per-point reports go to
/// `<output_dir>/sweep/<axis>/<value>/` and the combined table to
/// `<output_dir>/sweep_<axis>.tsv`.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: Option<&[String]>) -> Result<SweepOutcome, RunnerError> {
    let values: Vec<String> = match values {
        Some(v) => v.to_vec(),
        None => axis.default_values(cfg),
    };
    if values.is_empty() {
        return Err(RunnerError::Config(format!("no values for sweep axis {}", axis.as_str())));
    }
    let mut configs = Vec::with_capacity(values.len());
    for v in &values {
        let mut c = cfg.clone();
        axis.apply(&mut c, v)?;
        c.probe.enabled = false;
        configs.push(c);
    }

    let root = cfg.output_dir.clone();
    let mut points = Vec::with_capacity(values.len());
    let mut stats = RunStats::default();
    for (v, c) in values.iter().zip(configs) {
        log::info!("sweep {} = {v}", axis.as_str());
        let reports = root.join("sweep").join(axis.as_str()).join(v);
        let p = Pipeline::with_report_dir(c, root.clone(), reports)?;
        let world = p.prepare()?;
        let cands = p.candidates(&world)?;
        let ranked = p.rank(&world, &cands)?;
        let rows = p.evaluate(&world, &cands, &ranked)?;
        let s = p.finish()?;
        stats.backend_calls += s.backend_calls;
        stats.cache_hits += s.cache_hits;
        stats.archived_outputs += s.archived_outputs;
        stats.reused_stages.extend(s.reused_stages);
        points.push((v.clone(), rows));
    }

    let table = root.join(format!("sweep_{}.tsv", axis.as_str()));
    write_atomic(&table, format_table(axis, &cfg.eval.cutoffs, &points).as_bytes()).stage("sweep")?;
    Ok(SweepOutcome {
        axis,
        points,
        stats,
        table,
    })
}

fn format_table(axis: SweepAxis, cutoffs: &[usize], points: &[(String, Vec<ReportRow>)]) -> String {
    let mut out = format!("{}\tmethod\tusers\truns", axis.as_str());
    for k in cutoffs {
        write!(out, "\tndcg@{k}\tstd@{k}").unwrap();
    }
    out.push('\n');
    for (v, rows) in points {
        for row in rows {
            let r = &row.report;
            write!(out, "{v}\t{}\t{}\t{}", row.method, r.users, r.runs).unwrap();
            for &k in cutoffs {
                let m = r.at(k).unwrap_or(f64::NAN);
                let s = r.std_at(k).unwrap_or(f64::NAN);
                write!(out, "\t{m:.4}\t{s:.4}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}
