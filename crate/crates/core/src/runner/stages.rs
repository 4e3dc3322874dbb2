use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::artifacts::{fingerprint_of, file_sha, read_json, read_jsonl, write_atomic, write_json, write_jsonl, StageDir};
use super::config::{Backend, CandidateMode, DatasetKind, ExperimentConfig};
use super::{RunnerError, StageContext};
use crate::biasprobe::{
    popularity_by_rank, popularity_vs_history_len, position_probe, write_series, BiasError, HistoryLengthCurve,
    PopularityProfile, PositionProbeReport,
};
use crate::candgen::{
    fuse_candidates, gen_bm25, gen_bprmf, gen_markov, gen_pop, gen_random, hard_negative_set, load_versioned,
    read_candidates, save_versioned, train_bprmf, write_candidates, Bm25Index, CandGenError, CandidateSet,
    MarkovModel, MfModel, PopularityTable, Provenance, RandomOptions,
};
use crate::corpus::{
    build_histories, kcore_filter, leave_one_out, load_amazon, load_ml1m, read_corpus, sample_users, synthetic,
    training_histories, write_corpus, Catalog, CorpusStats, EvalInstance, LoadedCorpus, UserHistory,
};
use crate::grounding::{parse_output, ParseDiagnostics, Ranking};
use crate::llmclient::{
    CachedCompleter, Completer, CompletionRequest, LiveClient, LlmError, OracleLlm, ResponseCache, SimLlm,
};
use crate::promptkit::{build_prompt, make_ablation, PromptError, PromptStrategy, Templates};
use crate::rankeval::{
    average_runs, bootstrap_rank, evaluate, format_summary, write_report, write_run_table, BootstrapPlan, EvalError,
    EvalReport, ReportRow,
};
use crate::seed::{derive, Part};
use crate::{ItemId, UserId};

/// File names written by the pipeline.
pub mod files {
    pub const CORPUS_DIR: &str = "corpus";
    pub const CANDIDATES: &str = "candidates.tsv";
    pub const BPR_MODEL: &str = "bprmf.json";
    pub const BPR_LOG: &str = "bprmf_log.json";
    pub const RAW_OUTPUTS: &str = "raw_outputs.jsonl";
    pub const RANKINGS: &str = "rankings.jsonl";
    pub const CORPUS_STATS: &str = "corpus_stats.json";
    pub const REPORT: &str = "report.tsv";
    pub const REPORT_RUNS: &str = "report_runs.tsv";
    pub const SUMMARY: &str = "summary.txt";
    pub const PROBE_POSITION: &str = "probe_position.tsv";
    pub const PROBE_POPULARITY: &str = "probe_popularity.tsv";
    pub const PROBE_HISTORY: &str = "probe_history_len.tsv";
    pub const SERIES_POSITION: &str = "series_position.tsv";
    pub const SERIES_POPULARITY: &str = "series_popularity.tsv";
    pub const SERIES_HISTORY: &str = "series_history_len.tsv";
    pub const MANIFEST: &str = "manifest.json";
    pub const RUN_STATS: &str = "run_stats.json";
}

use files::*;

/// Failure inside a single ranking call.
#[derive(Debug, thiserror::Error)]
pub enum RankError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Bias(#[from] BiasError),
}

/// The prepared corpus and everything derived from the split.
#[derive(Debug, Clone)]
pub struct World {
    pub catalog: Arc<Catalog>,
    /// One leave-one-out case per eligible user, in user order.
    pub instances: Vec<EvalInstance>,
    pub training: Vec<UserHistory>,
    pub popularity: Arc<PopularityTable>,
    pub stats: CorpusStats,
    pub fingerprint: String,
}

/// Sampled users and their candidate sets, index-aligned.
#[derive(Debug, Clone)]
pub struct Candidates {
    pub instances: Vec<EvalInstance>,
    pub sets: Vec<CandidateSet>,
    pub fingerprint: String,
}

/// Final rankings per repeat run, index-aligned with [`Candidates`].
#[derive(Debug, Clone)]
pub struct Ranked {
    pub runs: Vec<Vec<Ranking>>,
    pub unparseable_rounds: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub position: PositionProbeReport,
    pub popularity: PopularityProfile,
    pub history: HistoryLengthCurve,
}

/// Call accounting for one pipeline invocation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    /// Requests that reached the LLM backend.
    pub backend_calls: usize,
    pub cache_hits: usize,
    /// Responses taken from an existing raw-output archive.
    pub archived_outputs: usize,
    /// Stages whose cached artifacts were reused.
    pub reused_stages: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<ReportRow>,
    pub probe: Option<ProbeOutcome>,
    pub stats: RunStats,
    pub report_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRecord {
    run: usize,
    user: UserId,
    round: usize,
    output: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RankRecord {
    run: usize,
    user: UserId,
    unparseable_rounds: usize,
    ranking: Ranking,
}

#[derive(Debug, Clone, Serialize)]
struct StageRecord {
    name: &'static str,
    fingerprint: String,
    dir: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config_fingerprint: String,
    seed: u64,
    config: serde_json::Value,
    stages: Vec<StageRecord>,
    seeds: BTreeMap<String, u64>,
    outputs: BTreeMap<&'a str, String>,
}

type Backed = CachedCompleter<Box<dyn Completer>>;

/// Stage runner for one configuration.
pub struct Pipeline {
    cfg: ExperimentConfig,
    /// Stage caches and the response cache live here.
    root: PathBuf,
    /// Report files go here.
    reports: PathBuf,
    templates: Templates,
    pool: rayon::ThreadPool,
    backend_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    archived: AtomicUsize,
    reused: Mutex<Vec<String>>,
    stages: Mutex<Vec<StageRecord>>,
}

fn part(user: &UserId) -> Part<'_> {
    Part::Str(user.as_str())
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, RunnerError> {
        let root = cfg.output_dir.clone();
        Self::with_report_dir(cfg, root.clone(), root)
    }

    /// Caches under `root`, reports under `reports`.
    pub fn with_report_dir(cfg: ExperimentConfig, root: PathBuf, reports: PathBuf) -> Result<Self, RunnerError> {
        cfg.validate()?;
        let templates = match &cfg.prompt.templates {
            Some(path) => Templates::load(path).map_err(|e| RunnerError::Config(e.to_string()))?,
            None => Templates::default(),
        };
        templates
            .domain(&cfg.dataset.domain)
            .map_err(|e| RunnerError::Config(e.to_string()))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.llm.client.parallelism.max(1))
            .build()
            .map_err(|e| RunnerError::Config(format!("thread pool: {e}")))?;
        Ok(Pipeline {
            cfg,
            root,
            reports,
            templates,
            pool,
            backend_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            archived: AtomicUsize::new(0),
            reused: Mutex::new(Vec::new()),
            stages: Mutex::new(Vec::new()),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn report_dir(&self) -> &Path {
        &self.reports
    }

    pub fn stats(&self) -> RunStats {
        RunStats {
            backend_calls: self.backend_calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            archived_outputs: self.archived.load(Ordering::Relaxed),
            reused_stages: self.reused.lock().unwrap().clone(),
        }
    }

    fn record(&self, sd: &StageDir, reused: bool) {
        let dir = sd
            .dir
            .strip_prefix(&self.root)
            .unwrap_or(&sd.dir)
            .to_string_lossy()
            .replace('\\', "/");
        let mut stages = self.stages.lock().unwrap();
        if !stages.iter().any(|s| s.fingerprint == sd.fingerprint) {
            stages.push(StageRecord {
                name: sd.name,
                fingerprint: sd.fingerprint.clone(),
                dir,
            });
        }
        if reused {
            log::info!("{}: reusing {}", sd.name, sd.dir.display());
            self.reused.lock().unwrap().push(sd.name.to_string());
        }
    }

    fn ensure_reports(&self, stage: &'static str) -> Result<(), RunnerError> {
        std::fs::create_dir_all(&self.reports)
            .map_err(super::artifacts::at(&self.reports))
            .stage(stage)
    }

    fn dataset_source(&self) -> serde_json::Value {
        let d = &self.cfg.dataset;
        let size = |p: &Path| std::fs::metadata(p).map(|m| m.len()).ok();
        match d.kind {
            DatasetKind::Ml1m => {
                let r = d.path.join("ratings.dat");
                let m = d.path.join("movies.dat");
                json!({"ratings": size(&r), "movies": size(&m)})
            }
            DatasetKind::Amazon => json!({"reviews": size(&d.reviews), "meta": size(&d.meta)}),
            DatasetKind::Tsv => json!({
                "items": size(&d.path.join("items.tsv")),
                "interactions": size(&d.path.join("interactions.tsv")),
            }),
            DatasetKind::Synthetic => json!(null),
        }
    }

    fn load_dataset(&self) -> Result<LoadedCorpus, RunnerError> {
        let d = &self.cfg.dataset;
        let loaded = match d.kind {
            DatasetKind::Ml1m => load_ml1m(&d.path.join("ratings.dat"), &d.path.join("movies.dat")),
            DatasetKind::Amazon => load_amazon(&d.reviews, &d.meta),
            DatasetKind::Synthetic => Ok(synthetic::generate(&d.synthetic)),
            DatasetKind::Tsv => read_corpus(&d.path).map(|(catalog, interactions)| LoadedCorpus {
                catalog,
                interactions,
                skipped_records: 0,
                dropped_untitled: 0,
            }),
        };
        loaded.stage("prepare")
    }

    /// Loads, filters and splits the dataset.
    pub fn prepare(&self) -> Result<World, RunnerError> {
        let d = &self.cfg.dataset;
        let fp = fingerprint_of(&json!({
            "kind": d.kind,
            "path": d.path,
            "reviews": d.reviews,
            "meta": d.meta,
            "kcore": d.kcore,
            "synthetic": if d.kind == DatasetKind::Synthetic { json!(d.synthetic) } else { json!(null) },
            "source": self.dataset_source(),
        }));
        let sd = StageDir::new(&self.root, "prepare", fp);
        let corpus_dir = sd.path(CORPUS_DIR);
        let reused = sd.is_complete(&[CORPUS_DIR]);
        if !reused {
            sd.create().stage("prepare")?;
            let loaded = self.load_dataset()?;
            log::info!(
                "prepare: {} interactions, {} skipped records, {} untitled",
                loaded.interactions.len(),
                loaded.skipped_records,
                loaded.dropped_untitled
            );
            let interactions = if d.kcore > 1 {
                kcore_filter(&loaded.interactions, d.kcore).stage("prepare")?
            } else {
                loaded.interactions
            };
            let used: HashSet<&ItemId> = interactions.iter().map(|x| &x.item).collect();
            let mut catalog = loaded.catalog.clone();
            catalog.retain(|item| used.contains(&item.id));
            write_corpus(&corpus_dir, &catalog, &interactions).stage("prepare")?;
            sd.mark_complete().stage("prepare")?;
        }
        self.record(&sd, reused);

        let (mut catalog, interactions) = read_corpus(&corpus_dir).stage("prepare")?;
        let histories = build_histories(&interactions);
        let split = leave_one_out(&histories);
        if !split.excluded.is_empty() {
            log::warn!("prepare: {} users with a single interaction excluded", split.excluded.len());
        }
        let training = training_histories(&split.instances);
        catalog.assign_popularity(&training);
        let popularity = PopularityTable::from_training(&catalog, &training);
        let stats = CorpusStats::compute(&interactions, self.cfg.prompt.max_history);
        Ok(World {
            catalog: Arc::new(catalog),
            instances: split.instances,
            training,
            popularity: Arc::new(popularity),
            stats,
            fingerprint: sd.fingerprint,
        })
    }

    /// BPR-MF trained on the training prefixes, cached as its own stage.
    pub fn bpr_model(&self, world: &World) -> Result<MfModel, RunnerError> {
        let params = self.cfg.candidates.bpr;
        let fp = fingerprint_of(&json!({"prepare": world.fingerprint, "bpr": params}));
        let sd = StageDir::new(&self.root, "bprmf", fp);
        let reused = sd.is_complete(&[BPR_MODEL]);
        if !reused {
            sd.create().stage("bprmf")?;
            let (model, log) = train_bprmf(&world.catalog, &world.training, &params).stage("bprmf")?;
            if let Some(last) = log.epoch_loss.last() {
                log::info!("bprmf: final epoch loss {last:.4}");
            }
            save_versioned(&sd.path(BPR_MODEL), "bprmf", &model).stage("bprmf")?;
            write_json(&sd.path(BPR_LOG), &log).stage("bprmf")?;
            sd.mark_complete().stage("bprmf")?;
        }
        self.record(&sd, reused);
        load_versioned(&sd.path(BPR_MODEL), "bprmf").stage("bprmf")
    }

    fn sample(&self, world: &World) -> Result<Vec<EvalInstance>, RunnerError> {
        let n = self.cfg.users.min(world.instances.len());
        if n < self.cfg.users {
            log::warn!("only {} eligible users, sampling all of them", world.instances.len());
        }
        sample_users(&world.instances, n, derive(self.cfg.seed, &["sample".into()])).stage("candidates")
    }

    fn generate(&self, world: &World, sample: &[EvalInstance]) -> Result<Vec<CandidateSet>, RunnerError> {
        let c = &self.cfg.candidates;
        let needs = |p: Provenance| c.mode != CandidateMode::Random && c.generators.contains(&p);
        let bm25 = needs(Provenance::Bm25).then(|| Bm25Index::build(&world.catalog));
        let markov = needs(Provenance::Markov).then(|| MarkovModel::from_training(&world.training));
        let bpr = if needs(Provenance::Bprmf) {
            Some(self.bpr_model(world)?)
        } else {
            None
        };
        let pop = world.popularity.as_ref();
        let catalog = world.catalog.as_ref();
        let gen_one = |g: Provenance, inst: &EvalInstance, m: usize| -> Result<CandidateSet, CandGenError> {
            match g {
                Provenance::Pop => gen_pop(pop, inst, m),
                Provenance::Bm25 => gen_bm25(bm25.as_ref().expect("index built"), catalog, pop, inst, m, c.bm25),
                Provenance::Bprmf => gen_bprmf(bpr.as_ref().expect("model trained"), inst, m),
                Provenance::Markov => gen_markov(markov.as_ref().expect("model built"), pop, inst, m),
                Provenance::GroundTruth | Provenance::Random => unreachable!("rejected by validation"),
            }
        };
        let seed = self.cfg.seed;
        self.pool
            .install(|| {
                sample
                    .par_iter()
                    .map(|inst| {
                        let s = derive(seed, &["candidates".into(), part(&inst.user)]);
                        let set = match c.mode {
                            CandidateMode::Random => {
                                let opts = RandomOptions {
                                    m: c.m,
                                    include_gt: true,
                                    exclude_history: c.exclude_history,
                                };
                                gen_random(catalog, inst, opts, s)?
                            }
                            CandidateMode::HardNegative => {
                                let ranked = gen_one(c.generators[0], inst, c.m)?;
                                hard_negative_set(&ranked, &inst.ground_truth, c.m, s)?
                            }
                            CandidateMode::Fusion => {
                                let lists = c
                                    .generators
                                    .iter()
                                    .map(|&g| gen_one(g, inst, c.top_k))
                                    .collect::<Result<Vec<_>, _>>()?;
                                fuse_candidates(&lists, c.top_k, Some(&inst.ground_truth), s)?
                            }
                        };
                        match c.gt_slot {
                            Some(slot) => set.with_gt_at(slot),
                            None => Ok(set),
                        }
                    })
                    .collect::<Result<Vec<_>, CandGenError>>()
            })
            .stage("candidates")
    }

    /// Samples users and builds their candidate sets.
    pub fn candidates(&self, world: &World) -> Result<Candidates, RunnerError> {
        let sample = self.sample(world)?;
        let fp = fingerprint_of(&json!({
            "prepare": world.fingerprint,
            "seed": self.cfg.seed,
            "users": sample.len(),
            "candidates": self.cfg.candidates,
        }));
        let sd = StageDir::new(&self.root, "candidates", fp);
        let reused = sd.is_complete(&[CANDIDATES]);
        if !reused {
            sd.create().stage("candidates")?;
            let sets = self.generate(world, &sample)?;
            write_candidates(&sd.path(CANDIDATES), &sets).stage("candidates")?;
            sd.mark_complete().stage("candidates")?;
        }
        self.record(&sd, reused);
        let sets = read_candidates(&sd.path(CANDIDATES)).stage("candidates")?;
        let aligned = sets.len() == sample.len() && sets.iter().zip(&sample).all(|(s, i)| s.user == i.user);
        if !aligned {
            return Err("cached candidate sets do not match the user sample").stage("candidates");
        }
        if self.cfg.candidates.mode == CandidateMode::Fusion {
            let hits = sets.iter().filter(|s| s.ground_truth_present()).count();
            log::info!("candidates: ground truth retrieved for {hits} of {} users", sets.len());
        }
        Ok(Candidates {
            instances: sample,
            sets,
            fingerprint: sd.fingerprint,
        })
    }

    fn strategy(&self, max_history: usize) -> Result<PromptStrategy, RunnerError> {
        PromptStrategy::new(self.cfg.prompt.strategy, max_history).map_err(|e| RunnerError::Config(e.to_string()))
    }

    fn completer(&self, world: &World, run: usize) -> Result<Backed, RunnerError> {
        let inner: Box<dyn Completer> = match self.cfg.llm.backend {
            Backend::Sim => {
                let mut params = self.cfg.llm.sim;
                params.seed = derive(self.cfg.seed, &["sim".into(), params.seed.into(), run.into()]);
                Box::new(
                    SimLlm::new(params, world.catalog.clone(), world.popularity.clone(), &world.fingerprint)
                        .stage("rank")?,
                )
            }
            Backend::Oracle => Box::new(OracleLlm),
            Backend::Live => Box::new(LiveClient::new(self.cfg.llm.client.clone()).stage("rank")?),
        };
        let cache = self
            .cfg
            .llm
            .cache
            .then(|| ResponseCache::new(self.root.join("cache").join("llm")));
        Ok(CachedCompleter::new(inner, cache))
    }

    fn absorb(&self, c: &Backed) {
        self.backend_calls.fetch_add(c.backend_calls(), Ordering::Relaxed);
        self.cache_hits.fetch_add(c.cache_hits(), Ordering::Relaxed);
    }

    fn history_for(&self, world: &World, inst: &EvalInstance) -> UserHistory {
        let seed = derive(self.cfg.seed, &["ablation".into(), part(&inst.user)]);
        make_ablation(&inst.prefix, self.cfg.prompt.ablation, &world.catalog, seed)
    }

    /// Prompt, answer (from `archived` when given) and parse.
    #[allow(clippy::too_many_arguments)]
    fn rank_once(
        &self,
        world: &World,
        completer: &dyn Completer,
        inst: &EvalInstance,
        prefix: &UserHistory,
        set: &CandidateSet,
        strategy: PromptStrategy,
        attempt: u32,
        archived: Option<&str>,
    ) -> Result<(Ranking, String), RankError> {
        let bundle = build_prompt(
            &self.templates,
            &world.catalog,
            prefix,
            set,
            strategy,
            self.cfg.prompt.output_mode,
            &self.cfg.dataset.domain,
        )?;
        let raw = match archived {
            Some(text) => text.to_string(),
            None => completer.complete(&CompletionRequest {
                bundle: &bundle,
                ground_truth: Some(&inst.ground_truth),
                attempt,
            })?,
        };
        let ranking = parse_output(&raw, &bundle, Some(&inst.ground_truth));
        Ok((ranking, raw))
    }

    fn llm_identity(&self) -> serde_json::Value {
        let l = &self.cfg.llm;
        match l.backend {
            Backend::Sim => json!({"backend": "sim", "sim": l.sim}),
            Backend::Oracle => json!({"backend": "oracle"}),
            Backend::Live => json!({
                "backend": "live",
                "endpoint": l.client.endpoint_url,
                "model": l.client.model_name,
                "temperature": l.client.temperature,
            }),
        }
    }

    /// Ranks every sampled user `repeats` times with bootstrapping.
    pub fn rank(&self, world: &World, cands: &Candidates) -> Result<Ranked, RunnerError> {
        let p = &self.cfg.prompt;
        let e = &self.cfg.eval;
        let fp = fingerprint_of(&json!({
            "candidates": cands.fingerprint,
            "seed": self.cfg.seed,
            "prompt": {
                "strategy": p.strategy,
                "max_history": p.max_history,
                "output_mode": p.output_mode,
                "ablation": p.ablation,
                "domain": self.cfg.dataset.domain,
            },
            "templates": self.templates,
            "llm": self.llm_identity(),
            "repeats": e.repeats,
            "bootstrap_rounds": e.bootstrap_rounds,
        }));
        let sd = StageDir::new(&self.root, "rank", fp);
        let expected = e.repeats * cands.sets.len();

        if sd.is_complete(&[RAW_OUTPUTS, RANKINGS]) {
            let records: Vec<RankRecord> = read_jsonl(&sd.path(RANKINGS)).stage("rank")?;
            if records.len() == expected {
                self.record(&sd, true);
                return Ok(self.group(records, cands.sets.len(), sd.fingerprint));
            }
            log::warn!("rank: cached rankings incomplete, recomputing");
        }

        let archive: HashMap<(usize, UserId, usize), String> = if sd.path(RAW_OUTPUTS).exists() {
            let raws: Vec<RawRecord> = read_jsonl(&sd.path(RAW_OUTPUTS)).stage("rank")?;
            log::info!("rank: re-parsing {} archived outputs", raws.len());
            raws.into_iter().map(|r| ((r.run, r.user, r.round), r.output)).collect()
        } else {
            HashMap::new()
        };

        sd.create().stage("rank")?;
        let strategy = self.strategy(p.max_history)?;
        let mut raw_all: Vec<RawRecord> = Vec::new();
        let mut records: Vec<RankRecord> = Vec::with_capacity(expected);
        for run in 0..e.repeats {
            let completer = self.completer(world, run)?;
            let results = self.pool.install(|| {
                cands
                    .instances
                    .par_iter()
                    .zip(&cands.sets)
                    .map(|(inst, set)| {
                        let prefix = self.history_for(world, inst);
                        let plan = BootstrapPlan {
                            rounds: e.bootstrap_rounds,
                            seed: derive(self.cfg.seed, &["bootstrap".into(), run.into(), part(&inst.user)]),
                        };
                        let mut raws = Vec::with_capacity(plan.rounds);
                        let outcome = bootstrap_rank(set, &plan, |arranged, round| {
                            let key = (run, inst.user.clone(), round);
                            let archived = archive.get(&key).map(String::as_str);
                            if archived.is_some() {
                                self.archived.fetch_add(1, Ordering::Relaxed);
                            }
                            let (ranking, raw) =
                                self.rank_once(world, &completer, inst, &prefix, arranged, strategy, run as u32, archived)?;
                            raws.push(RawRecord {
                                run,
                                user: inst.user.clone(),
                                round,
                                output: raw,
                            });
                            Ok::<_, RankError>(ranking)
                        })?;
                        Ok::<_, RankError>((outcome, raws))
                    })
                    .collect::<Vec<_>>()
            });
            self.absorb(&completer);
            for (inst, result) in cands.instances.iter().zip(results) {
                let (outcome, raws) = result.stage("rank")?;
                raw_all.extend(raws);
                records.push(RankRecord {
                    run,
                    user: inst.user.clone(),
                    unparseable_rounds: outcome.unparseable_rounds,
                    ranking: outcome.ranking,
                });
            }
        }
        write_jsonl(&sd.path(RAW_OUTPUTS), &raw_all).stage("rank")?;
        write_jsonl(&sd.path(RANKINGS), &records).stage("rank")?;
        sd.mark_complete().stage("rank")?;
        self.record(&sd, false);
        Ok(self.group(records, cands.sets.len(), sd.fingerprint))
    }

    fn group(&self, records: Vec<RankRecord>, users: usize, fingerprint: String) -> Ranked {
        let unparseable_rounds = records.iter().map(|r| r.unparseable_rounds).sum();
        let mut runs: Vec<Vec<Ranking>> = vec![Vec::with_capacity(users); self.cfg.eval.repeats];
        for r in records {
            runs[r.run].push(r.ranking);
        }
        Ranked {
            runs,
            unparseable_rounds,
            fingerprint,
        }
    }

    fn baseline_rankings(&self, world: &World, cands: &Candidates, which: Provenance) -> Result<Vec<Ranking>, RunnerError> {
        let scored: Vec<Vec<f64>> = match which {
            Provenance::Pop => cands
                .sets
                .iter()
                .map(|s| s.items().iter().map(|i| world.popularity.count(i) as f64).collect())
                .collect(),
            Provenance::Bm25 => {
                let index = Bm25Index::build(&world.catalog);
                let doc: HashMap<&ItemId, usize> = index.doc_ids().iter().enumerate().map(|(i, d)| (d, i)).collect();
                cands
                    .instances
                    .par_iter()
                    .zip(&cands.sets)
                    .map(|(inst, set)| {
                        let query = Bm25Index::query_for(&world.catalog, &inst.prefix.items);
                        let scores = index.score(&query, self.cfg.candidates.bm25);
                        set.items().iter().map(|i| doc.get(i).map_or(0.0, |&d| scores[d])).collect()
                    })
                    .collect()
            }
            Provenance::Bprmf => {
                let model = self.bpr_model(world)?;
                let pos: HashMap<&ItemId, usize> = model.items().iter().enumerate().map(|(i, d)| (d, i)).collect();
                cands
                    .instances
                    .par_iter()
                    .zip(&cands.sets)
                    .map(|(inst, set)| {
                        let scores = model.scores(&inst.user);
                        set.items()
                            .iter()
                            .map(|i| pos.get(i).map_or(f64::NEG_INFINITY, |&d| scores[d]))
                            .collect()
                    })
                    .collect()
            }
            other => return Err(format!("unsupported baseline {other}")).stage("eval"),
        };
        Ok(cands
            .instances
            .iter()
            .zip(&cands.sets)
            .zip(scored)
            .map(|((inst, set), scores)| {
                let mut slots: Vec<usize> = (0..set.len()).collect();
                slots.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
                let items: Vec<ItemId> = slots.iter().map(|&s| set.items()[s].clone()).collect();
                let gt_rank = items.iter().position(|x| *x == inst.ground_truth);
                Ranking {
                    items,
                    slots,
                    diagnostics: ParseDiagnostics::default(),
                    gt_rank,
                }
            })
            .collect())
    }

    /// Scores the rankings and writes the report tables.
    pub fn evaluate(&self, world: &World, cands: &Candidates, ranked: &Ranked) -> Result<Vec<ReportRow>, RunnerError> {
        self.ensure_reports("eval")?;
        let cutoffs = &self.cfg.eval.cutoffs;
        let reports = ranked
            .runs
            .iter()
            .map(|rs| evaluate(&cands.instances, rs, cutoffs, &ranked.fingerprint))
            .collect::<Result<Vec<EvalReport>, _>>()
            .stage("eval")?;
        let mut rows = vec![ReportRow {
            method: self.cfg.eval.method.clone(),
            report: average_runs(&reports).stage("eval")?,
        }];
        for &b in &self.cfg.eval.baselines {
            let rankings = self.baseline_rankings(world, cands, b)?;
            let fp = fingerprint_of(&json!({"candidates": cands.fingerprint, "baseline": b}));
            let report = evaluate(&cands.instances, &rankings, cutoffs, &fp).stage("eval")?;
            rows.push(ReportRow {
                method: b.to_string(),
                report: average_runs(&[report]).stage("eval")?,
            });
        }
        write_report(&self.reports.join(REPORT), &rows).stage("eval")?;
        write_run_table(&self.reports.join(REPORT_RUNS), &rows).stage("eval")?;
        let mut summary = format_summary(&rows);
        if ranked.unparseable_rounds > 0 {
            summary.push_str(&format!("unparseable rounds: {}\n", ranked.unparseable_rounds));
        }
        write_atomic(&self.reports.join(SUMMARY), summary.as_bytes()).stage("eval")?;
        write_json(&self.reports.join(CORPUS_STATS), &world.stats).stage("eval")?;
        Ok(rows)
    }

    /// Cases for the probes: the stage's own sets when every one holds the
    /// ground truth, otherwise fresh random-negative sets.
    fn probe_cases(&self, world: &World, cands: &Candidates) -> Result<Vec<(EvalInstance, CandidateSet)>, RunnerError> {
        if cands.sets.iter().all(|s| s.ground_truth_present()) {
            return Ok(cands.instances.iter().cloned().zip(cands.sets.iter().cloned()).collect());
        }
        log::info!("probe: candidate sets lack the ground truth, drawing random negatives");
        let c = &self.cfg.candidates;
        cands
            .instances
            .iter()
            .map(|inst| {
                let opts = RandomOptions {
                    m: c.m,
                    include_gt: true,
                    exclude_history: c.exclude_history,
                };
                let seed = derive(self.cfg.seed, &["probe".into(), part(&inst.user)]);
                gen_random(&world.catalog, inst, opts, seed).map(|s| (inst.clone(), s))
            })
            .collect::<Result<_, _>>()
            .stage("probe")
    }

    /// Position, popularity and history-length probes.
    pub fn probe(&self, world: &World, cands: &Candidates, ranked: &Ranked) -> Result<ProbeOutcome, RunnerError> {
        let cases = self.probe_cases(world, cands)?;
        let pc = &self.cfg.probe;
        let completer = self.completer(world, 0)?;
        let strategy = self.strategy(self.cfg.prompt.max_history)?;
        let position = self
            .pool
            .install(|| {
                position_probe(&cases, &pc.slots, &self.cfg.eval.cutoffs, |inst, set, _slot| {
                    let prefix = self.history_for(world, inst);
                    self.rank_once(world, &completer, inst, &prefix, set, strategy, 0, None)
                        .map(|(r, _)| r)
                })
            })
            .stage("probe")?;
        let popularity = popularity_by_rank(ranked.runs.iter().flatten(), &world.popularity);
        let kind = self.cfg.prompt.strategy;
        let base_max = self.cfg.prompt.max_history;
        let history = self
            .pool
            .install(|| {
                popularity_vs_history_len(&cases, &pc.history_lengths, &world.popularity, |inst, set, len| {
                    let strategy = PromptStrategy::new(kind, base_max.max(len))?;
                    let prefix = self.history_for(world, inst);
                    self.rank_once(world, &completer, inst, &prefix, set, strategy, 0, None)
                        .map(|(r, _)| r)
                })
            })
            .stage("probe")?;
        self.absorb(&completer);

        self.ensure_reports("probe")?;
        let out = |f: &str| self.reports.join(f);
        position.write_tsv(&out(PROBE_POSITION)).stage("probe")?;
        popularity.write_tsv(&out(PROBE_POPULARITY)).stage("probe")?;
        history.write_tsv(&out(PROBE_HISTORY)).stage("probe")?;
        let k = pc.series_cutoff;
        write_series(&out(SERIES_POSITION), "gt_slot", &format!("ndcg@{k}"), &position.series(k)).stage("probe")?;
        write_series(&out(SERIES_POPULARITY), "rank", "popularity", &popularity.series()).stage("probe")?;
        write_series(&out(SERIES_HISTORY), "history_len", "top1_popularity", &history.series()).stage("probe")?;
        Ok(ProbeOutcome {
            position,
            popularity,
            history,
        })
    }

    /// Writes `manifest.json` and `run_stats.json` to the report directory.
    pub fn finish(&self) -> Result<RunStats, RunnerError> {
        self.ensure_reports("report")?;
        let mut seeds = BTreeMap::new();
        let s = self.cfg.seed;
        seeds.insert("master".to_string(), s);
        seeds.insert("sample".to_string(), derive(s, &["sample".into()]));
        if self.cfg.llm.backend == Backend::Sim {
            for run in 0..self.cfg.eval.repeats {
                let v = derive(s, &["sim".into(), self.cfg.llm.sim.seed.into(), run.into()]);
                seeds.insert(format!("sim_run_{run}"), v);
            }
        }
        let mut outputs = BTreeMap::new();
        for f in [
            REPORT,
            REPORT_RUNS,
            SUMMARY,
            CORPUS_STATS,
            PROBE_POSITION,
            PROBE_POPULARITY,
            PROBE_HISTORY,
            SERIES_POSITION,
            SERIES_POPULARITY,
            SERIES_HISTORY,
        ] {
            let path = self.reports.join(f);
            if path.exists() {
                outputs.insert(f, file_sha(&path).stage("report")?);
            }
        }
        let mut config = serde_json::to_value(&self.cfg).expect("config serializes");
        if let Some(obj) = config.as_object_mut() {
            obj.remove("output_dir");
        }
        let manifest = Manifest {
            config_fingerprint: self.cfg.fingerprint(),
            seed: s,
            config,
            stages: self.stages.lock().unwrap().clone(),
            seeds,
            outputs,
        };
        write_json(&self.reports.join(MANIFEST), &manifest).stage("report")?;
        let stats = self.stats();
        write_json(&self.reports.join(RUN_STATS), &stats).stage("report")?;
        Ok(stats)
    }

    /// Every stage, probes included when enabled.
    pub fn run(&self) -> Result<RunOutcome, RunnerError> {
        let world = self.prepare()?;
        let cands = self.candidates(&world)?;
        let ranked = self.rank(&world, &cands)?;
        let rows = self.evaluate(&world, &cands, &ranked)?;
        let probe = if self.cfg.probe.enabled {
            Some(self.probe(&world, &cands, &ranked)?)
        } else {
            None
        };
        let stats = self.finish()?;
        Ok(RunOutcome {
            rows,
            probe,
            stats,
            report_dir: self.reports.clone(),
        })
    }
}

/// Reads the stats a previous invocation left in `dir`.
pub fn read_run_stats(dir: &Path) -> Result<RunStats, RunnerError> {
    read_json(&dir.join(RUN_STATS)).stage("report")
}
