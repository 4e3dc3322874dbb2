use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EvalError, EvalReport};

/// Schema version written in the first line of every report table.
pub const REPORT_VERSION: u32 = 1;

const HEADER: &str = "method\tcutoff\tndcg_mean\tndcg_std\truns\tusers\tooc_rate\tfingerprint";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub report: EvalReport,
}

fn io_err(path: &Path, source: std::io::Error) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One row per method and cutoff. NDCG in percent with 4 decimals.
pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<(), EvalError> {
    let mut out = format!("# llmrank report v{REPORT_VERSION}\n{HEADER}\n");
    for row in rows {
        let r = &row.report;
        for (i, k) in r.cutoffs.iter().enumerate() {
            writeln!(
                out,
                "{}\t{k}\t{:.4}\t{:.4}\t{}\t{}\t{:.6}\t{}",
                row.method, r.mean[i], r.std[i], r.runs, r.users, r.ooc_rate, r.fingerprint
            )
            .unwrap();
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// One row per method, run and cutoff.
pub fn write_run_table(path: &Path, rows: &[ReportRow]) -> Result<(), EvalError> {
    let mut out = format!("# llmrank runs v{REPORT_VERSION}\nmethod\trun\tcutoff\tndcg\n");
    for row in rows {
        for (run, values) in row.report.per_run.iter().enumerate() {
            for (k, v) in row.report.cutoffs.iter().zip(values) {
                writeln!(out, "{}\t{run}\t{k}\t{v:.4}", row.method).unwrap();
            }
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a table written by [`write_report`]. Per-run values are not
/// stored there, so `per_run` comes back empty.
pub fn read_report(path: &Path) -> Result<Vec<ReportRow>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bad = |line: usize, message: &str| EvalError::Format {
        path: path.display().to_string(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines();
    let version_line = lines.next().unwrap_or_default();
    if version_line != format!("# llmrank report v{REPORT_VERSION}") {
        return Err(bad(1, "unsupported report version"));
    }
    if lines.next() != Some(HEADER) {
        return Err(bad(2, "unexpected header"));
    }
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        let lineno = n + 3;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            return Err(bad(lineno, "expected 8 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(lineno, "bad number"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(lineno, "bad integer"));
        let i = *index.entry(f[0].to_string()).or_insert_with(|| {
            rows.push(ReportRow {
                method: f[0].to_string(),
                report: EvalReport {
                    cutoffs: vec![],
                    mean: vec![],
                    std: vec![],
                    per_run: vec![],
                    runs: 0,
                    users: 0,
                    ooc_rate: 0.0,
                    fingerprint: f[7].to_string(),
                },
            });
            rows.len() - 1
        });
        let r = &mut rows[i].report;
        r.cutoffs.push(int(f[1])?);
        r.mean.push(num(f[2])?);
        r.std.push(num(f[3])?);
        r.runs = int(f[4])?;
        r.users = int(f[5])?;
        r.ooc_rate = num(f[6])?;
    }
    Ok(rows)
}

/// Plain-text table: one line per method with `mean ± std` per cutoff.
pub fn format_summary(rows: &[ReportRow]) -> String {
    let Some(first) = rows.first() else {
        return "no results\n".into();
    };
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}", "method");
    for k in &first.report.cutoffs {
        write!(out, "  {:>15}", format!("N@{k}")).unwrap();
    }
    out.push_str("    ooc%  runs  users\n");
    for row in rows {
        let r = &row.report;
        write!(out, "{:<width$}", row.method).unwrap();
        for (m, s) in r.mean.iter().zip(&r.std) {
            write!(out, "  {:>15}", format!("{m:.2} ± {s:.2}")).unwrap();
        }
        writeln!(out, "  {:>6.2}  {:>4}  {:>5}", 100.0 * r.ooc_rate, r.runs, r.users).unwrap();
    }
    out
}
