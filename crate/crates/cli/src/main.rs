use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use llmrank::rankeval::{format_summary, read_report};
use llmrank::runner::{files, sweep, Pipeline, SweepAxis};
use llmrank::ExperimentConfig;

/// Zero-shot LLM ranking experiments for sequential recommendation.
#[derive(Debug, Parser)]
#[command(name = "llmrank", version)]
struct Cli {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set candidates.m=10`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory (`output_dir`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Master seed (`seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of sampled users (`users`).
    #[arg(long, global = true)]
    users: Option<usize>,

    /// LLM backend: live, sim or oracle (`llm.backend`).
    #[arg(long, global = true)]
    backend: Option<String>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, filter and split the dataset; print corpus statistics.
    Prepare,
    /// Sample users and build their candidate sets.
    Candidates,
    /// Rank every sampled user with the configured backend.
    Rank,
    /// Score the rankings and write report tables.
    Eval,
    /// Run the position, popularity and history-length probes.
    Probe,
    /// Repeat the experiment over one axis.
    Sweep {
        /// history_len, candidate_size, gt_slot or strategy.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values; the axis defaults when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
    },
    /// Print the summary of an existing report.
    Report {
        /// Report directory; the output directory when omitted.
        dir: Option<PathBuf>,
    },
    /// Every stage from prepare to probe.
    Run,
    /// Print the effective configuration.
    Config,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
        None => String::new(),
    };
    let mut overrides = Vec::new();
    let quoted = |s: &str| format!("{s:?}");
    if let Some(out) = &cli.out {
        overrides.push(("output_dir".to_string(), quoted(&out.display().to_string())));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    if let Some(users) = cli.users {
        overrides.push(("users".to_string(), users.to_string()));
    }
    if let Some(b) = &cli.backend {
        overrides.push(("llm.backend".to_string(), quoted(b)));
    }
    for kv in &cli.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {kv:?}");
        };
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(ExperimentConfig::from_toml_with_overrides(&text, &overrides)?)
}

fn print_summary(dir: &std::path::Path) -> Result<()> {
    let path = dir.join(files::REPORT);
    let rows = read_report(&path).with_context(|| format!("reading {}", path.display()))?;
    print!("{}", format_summary(&rows));
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if let Command::Report { dir } = &cli.command {
        let dir = dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
        print_summary(&dir)?;
        for axis in SweepAxis::ALL {
            let table = dir.join(format!("sweep_{}.tsv", axis.as_str()));
            if table.exists() {
                println!("sweep table: {}", table.display());
            }
        }
        return Ok(());
    }
    if let Command::Sweep { axis, values } = &cli.command {
        let out = sweep(&cfg, *axis, values.as_deref())?;
        print!("{}", fs::read_to_string(&out.table)?);
        eprintln!("llm calls: {}, cache hits: {}", out.stats.backend_calls, out.stats.cache_hits);
        return Ok(());
    }

    let p = Pipeline::new(cfg)?;
    let world = p.prepare()?;
    if let Command::Prepare = cli.command {
        println!("{}", serde_json::to_string_pretty(&world.stats)?);
        p.finish()?;
        return Ok(());
    }
    let cands = p.candidates(&world)?;
    if let Command::Candidates = cli.command {
        let with_gt = cands.sets.iter().filter(|s| s.ground_truth_present()).count();
        println!("{} candidate sets, ground truth present in {with_gt}", cands.sets.len());
        p.finish()?;
        return Ok(());
    }
    let ranked = p.rank(&world, &cands)?;
    match cli.command {
        Command::Rank => {
            println!("{} runs x {} users ranked", ranked.runs.len(), cands.sets.len());
        }
        Command::Eval => {
            p.evaluate(&world, &cands, &ranked)?;
            print_summary(p.report_dir())?;
        }
        Command::Probe => {
            let probe = p.probe(&world, &cands, &ranked)?;
            let k = p.config().probe.series_cutoff;
            for (slot, v) in probe.position.series(k) {
                println!("gt slot {slot}: NDCG@{k} {v:.2}");
            }
        }
        Command::Run => {
            p.evaluate(&world, &cands, &ranked)?;
            if p.config().probe.enabled {
                p.probe(&world, &cands, &ranked)?;
            }
            print_summary(p.report_dir())?;
        }
        _ => unreachable!("handled above"),
    }
    let stats = p.finish()?;
    eprintln!("llm calls: {}, cache hits: {}", stats.backend_calls, stats.cache_hits);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
