use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::RunnerError;
use crate::biasprobe::{DEFAULT_HISTORY_LENGTHS, DEFAULT_PROBE_SLOTS};
use crate::candgen::{Bm25Params, BprParams, Provenance};
use crate::corpus::synthetic::SyntheticSpec;
use crate::llmclient::{LlmConfig, SimLlmParams};
use crate::promptkit::{Ablation, OutputMode, StrategyKind};
use crate::rankeval::DEFAULT_CUTOFFS;
use crate::seed::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// `ratings.dat` and `movies.dat` under `path`.
    Ml1m,
    /// `reviews` and `meta` JSON-lines files.
    Amazon,
    /// Generated in memory from `synthetic`.
    Synthetic,
    /// `items.tsv` and `interactions.tsv` under `path`.
    Tsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub path: PathBuf,
    pub reviews: PathBuf,
    pub meta: PathBuf,
    /// k-core threshold; 0 or 1 disables filtering.
    pub kcore: usize,
    /// Noun pack used in prompts.
    pub domain: String,
    pub synthetic: SyntheticSpec,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Synthetic,
            path: PathBuf::from("data/ml-1m"),
            reviews: PathBuf::from("data/games/reviews.json"),
            meta: PathBuf::from("data/games/meta.json"),
            kcore: 5,
            domain: "movies".into(),
            synthetic: SyntheticSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// Ground truth plus uniform random negatives.
    Random,
    /// Ground truth plus the top negatives of the first listed generator.
    HardNegative,
    /// Union of every generator's top `top_k`, ground truth not added.
    Fusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateConfig {
    pub mode: CandidateMode,
    pub m: usize,
    pub generators: Vec<Provenance>,
    pub top_k: usize,
    /// Keep history items out of random negatives.
    pub exclude_history: bool,
    /// Move the ground truth to this slot after generation.
    pub gt_slot: Option<usize>,
    pub bm25: Bm25Params,
    pub bpr: BprParams,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            mode: CandidateMode::Random,
            m: 20,
            generators: vec![
                Provenance::Pop,
                Provenance::Bm25,
                Provenance::Bprmf,
                Provenance::Markov,
            ],
            top_k: 3,
            exclude_history: true,
            gt_slot: None,
            bm25: Bm25Params::default(),
            bpr: BprParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub strategy: StrategyKind,
    pub max_history: usize,
    pub output_mode: OutputMode,
    pub ablation: Ablation,
    /// Template file replacing the bundled templates.
    pub templates: Option<PathBuf>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            strategy: StrategyKind::Sequential,
            max_history: 50,
            output_mode: OutputMode::Title,
            ablation: Ablation::None,
            templates: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Live,
    Sim,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSection {
    pub backend: Backend,
    /// Cache responses on disk under `<output_dir>/cache/llm`.
    pub cache: bool,
    #[serde(flatten)]
    pub client: LlmConfig,
    pub sim: SimLlmParams,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            backend: Backend::Sim,
            cache: true,
            client: LlmConfig::default(),
            sim: SimLlmParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub cutoffs: Vec<usize>,
    pub repeats: usize,
    pub bootstrap_rounds: usize,
    /// Non-LLM rankers scored on the same candidate sets.
    pub baselines: Vec<Provenance>,
    /// Method label for the LLM row.
    pub method: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            repeats: 3,
            bootstrap_rounds: 3,
            baselines: Vec::new(),
            method: "llm".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Run the probes as part of `run`.
    pub enabled: bool,
    pub slots: Vec<usize>,
    pub history_lengths: Vec<usize>,
    /// Cutoff for the plot-ready position series.
    pub series_cutoff: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            enabled: true,
            slots: DEFAULT_PROBE_SLOTS.to_vec(),
            history_lengths: DEFAULT_HISTORY_LENGTHS.to_vec(),
            series_cutoff: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives named sub-seeds from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Number of evaluation users sampled.
    pub users: usize,
    pub dataset: DatasetConfig,
    pub candidates: CandidateConfig,
    pub prompt: PromptConfig,
    pub llm: LlmSection,
    pub eval: EvalConfig,
    pub probe: ProbeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            output_dir: PathBuf::from("runs/default"),
            users: 200,
            dataset: DatasetConfig::default(),
            candidates: CandidateConfig::default(),
            prompt: PromptConfig::default(),
            llm: LlmSection::default(),
            eval: EvalConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

/// Parses an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), RunnerError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| {
        RunnerError::Config(format!("empty override key {key:?}"))
    })?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| RunnerError::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key=value` overrides (dotted keys, TOML
    /// values) and validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self, RunnerError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
        for (k, v) in overrides {
            set_path(&mut table, k, parse_value(v))?;
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| RunnerError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, RunnerError> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::Config(m));
        let c = &self.candidates;
        if c.m < 2 {
            return bad(format!("candidates.m must be >= 2, got {}", c.m));
        }
        if let Some(s) = c.gt_slot {
            if s >= c.m {
                return bad(format!("candidates.gt_slot {s} must be < m = {}", c.m));
            }
        }
        if c.mode != CandidateMode::Random && c.generators.is_empty() {
            return bad("candidates.generators is empty".into());
        }
        for g in &c.generators {
            if matches!(g, Provenance::GroundTruth | Provenance::Random) {
                return bad(format!("{g} is not a retrieval generator"));
            }
        }
        if c.mode == CandidateMode::Fusion && c.top_k == 0 {
            return bad("candidates.top_k must be >= 1".into());
        }
        if self.prompt.max_history == 0 {
            return bad("prompt.max_history must be >= 1".into());
        }
        if self.users == 0 {
            return bad("users must be >= 1".into());
        }
        if self.eval.repeats == 0 {
            return bad("eval.repeats must be >= 1".into());
        }
        if self.eval.bootstrap_rounds == 0 {
            return bad("eval.bootstrap_rounds must be >= 1".into());
        }
        if self.eval.cutoffs.is_empty() || self.eval.cutoffs.contains(&0) {
            return bad("eval.cutoffs must be non-empty and >= 1".into());
        }
        for b in &self.eval.baselines {
            if !matches!(b, Provenance::Pop | Provenance::Bm25 | Provenance::Bprmf) {
                return bad(format!("unsupported baseline {b}"));
            }
        }
        if self.probe.series_cutoff == 0 {
            return bad("probe.series_cutoff must be >= 1".into());
        }
        self.llm.client.validate().map_err(|e| RunnerError::Config(e.to_string()))?;
        self.llm.sim.validate().map_err(|e| RunnerError::Config(e.to_string()))?;
        Ok(())
    }

    /// Canonical JSON (keys sorted) of every setting except `output_dir`,
    /// so the same experiment fingerprints alike wherever it is written.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        v.to_string()
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c.candidates.m, 20);
        assert_eq!(c.prompt.max_history, 50);
        assert_eq!(c.llm.client.temperature, 0.2);
        assert_eq!(c.users, 200);
        assert_eq!(c.eval.repeats, 3);
        assert_eq!(c.eval.bootstrap_rounds, 3);
        assert_eq!(c.eval.cutoffs, [1, 5, 10, 20]);

        let o = |k: &str, v: &str| (k.to_string(), v.to_string());
        let c = ExperimentConfig::from_toml_with_overrides(
            "[candidates]\nm = 10\n",
            &[
                o("candidates.m", "15"),
                o("llm.backend", "oracle"),
                o("prompt.strategy", "icl"),
                o("llm.sim.w_pos", "0.5"),
                o("eval.cutoffs", "[1, 10]"),
                o("llm.model_name", "local-model"),
            ],
        )
        .unwrap();
        assert_eq!(c.candidates.m, 15);
        assert_eq!(c.llm.backend, Backend::Oracle);
        assert_eq!(c.prompt.strategy, StrategyKind::Icl);
        assert_eq!(c.llm.sim.w_pos, 0.5);
        assert_eq!(c.eval.cutoffs, [1, 10]);
        assert_eq!(c.llm.client.model_name, "local-model");

        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[candidates]\nm = 1").is_err());
        assert!(ExperimentConfig::from_toml("[candidates]\ngt_slot = 20").is_err());
    }

    #[test]
    fn round_trip_and_fingerprint() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.fingerprint(), c.fingerprint());
        let mut d = c.clone();
        d.output_dir = "elsewhere".into();
        assert_eq!(d.fingerprint(), c.fingerprint());
        d.seed += 1;
        assert_ne!(d.fingerprint(), c.fingerprint());
    }
}
