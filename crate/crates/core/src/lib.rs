//! Zero-shot LLM ranking harness for sequential recommendation.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`]: dataset ingestion, k-core filtering, chronological histories
//!   and leave-one-out splits.
//! - [`candgen`]: candidate generators (random, popularity, BM25, BPR-MF,
//!   first-order Markov) and multi-generator fusion.
//! - [`promptkit`]: instruction prompt rendering for the sequential,
//!   recency-focused and in-context-learning strategies.
//! - [`llmclient`]: OpenAI-compatible chat client with a response cache, plus
//!   simulated and oracle rankers.
//! - [`grounding`]: mapping raw model output back onto the candidate set.
//! - [`rankeval`]: NDCG@K, run averaging and bootstrapped Borda aggregation.
//! - [`biasprobe`]: position and popularity bias measurements.
//! - [`runner`]: configuration-driven orchestration of all of the above.

pub mod biasprobe;
pub mod candgen;
pub mod corpus;
pub mod grounding;
pub mod llmclient;
pub mod promptkit;
pub mod rankeval;
pub mod runner;
pub mod seed;
pub mod text;

mod ids;

pub use ids::{ItemId, UserId};

pub use candgen::{CandidateSet, Provenance};
pub use corpus::{Catalog, EvalInstance, Interaction, Item, UserHistory};
pub use grounding::{ParseDiagnostics, Ranking};
pub use promptkit::{OutputMode, PromptBundle, PromptStrategy, StrategyKind};
pub use rankeval::EvalReport;
pub use runner::ExperimentConfig;
