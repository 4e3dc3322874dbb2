//! Configuration-driven experiment orchestration.
//!
//! A run goes through five stages: prepare, candidates, rank, eval and
//! probe. The first three keep their artifacts under
//! `<output_dir>/stages/<stage>-<fingerprint>/`, where the fingerprint
//! covers the stage's own settings and its upstream fingerprint, so a later
//! invocation with the same upstream settings reuses them. Report files are
//! written to the output directory itself.
//!
//! Every random choice is seeded by [`crate::seed::derive`] from the master
//! seed and a stage label, so changing one axis leaves the others alone.

mod artifacts;
mod config;
mod stages;
mod sweep;

pub use artifacts::{ArtifactError, StageDir};
pub use config::{
    Backend, CandidateConfig, CandidateMode, DatasetConfig, DatasetKind, EvalConfig, ExperimentConfig,
    LlmSection, ProbeConfig, PromptConfig,
};
pub use stages::{
    files, read_run_stats, Candidates, Pipeline, ProbeOutcome, RankError, Ranked, RunOutcome, RunStats, World,
};
pub use sweep::{sweep, SweepAxis, SweepOutcome};

use std::error::Error;

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn Error + Send + Sync>,
    },
}

impl RunnerError {
    pub fn stage_name(&self) -> Option<&'static str> {
        match self {
            RunnerError::Stage { stage, .. } => Some(stage),
            RunnerError::Config(_) => None,
        }
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T, RunnerError>;
}

impl<T, E: Into<Box<dyn Error + Send + Sync>>> StageContext<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, RunnerError> {
        self.map_err(|e| RunnerError::Stage {
            stage,
            source: e.into(),
        })
    }
}

/// Runs every stage for `config`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome, RunnerError> {
    Pipeline::new(config.clone())?.run()
}
