//! Completion backends: an OpenAI-compatible HTTP client, a deterministic
//! simulated ranker with tunable biases, and an oracle. All share the
//! [`Completer`] trait and can sit behind a content-addressed response
//! cache.

mod cache;
mod live;
mod oracle;
mod sim;

use serde::{Deserialize, Serialize};

use crate::promptkit::{OutputMode, PromptBundle};
use crate::ItemId;

pub use cache::{cache_key, CachedCompleter, ResponseCache};
pub use live::LiveClient;
pub use oracle::OracleLlm;
pub use sim::{SimLlm, SimLlmParams};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("request failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cache {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: u64,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff_ms: u64,
    pub parallelism: usize,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-3.5-turbo".into(),
            temperature: 0.2,
            max_retries: 3,
            timeout_secs: 120,
            backoff_ms: 1000,
            parallelism: 4,
            api_key_env: "OPENAI_API_KEY".into(),
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.parallelism == 0 {
            return Err(LlmError::Config("parallelism must be >= 1".into()));
        }
        Ok(())
    }
}

/// One ranking request. `attempt` distinguishes deliberate re-queries of
/// the same prompt (it is part of the cache key).
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub bundle: &'a PromptBundle,
    /// Only the oracle reads this.
    pub ground_truth: Option<&'a ItemId>,
    pub attempt: u32,
}

pub trait Completer: Send + Sync {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, LlmError>;

    /// Stable description of the backend and its settings, used in cache
    /// keys.
    fn cache_identity(&self) -> String;

    fn temperature(&self) -> f64 {
        0.0
    }
}

impl<C: Completer + ?Sized> Completer for Box<C> {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, LlmError> {
        (**self).complete(req)
    }

    fn cache_identity(&self) -> String {
        (**self).cache_identity()
    }

    fn temperature(&self) -> f64 {
        (**self).temperature()
    }
}

/// Formats slots in ranked order according to `mode`.
pub(crate) fn render_answer(bundle: &PromptBundle, order: &[usize]) -> Vec<String> {
    order
        .iter()
        .enumerate()
        .map(|(rank, &slot)| match bundle.output_mode {
            OutputMode::Title => format!("{}. {}", rank + 1, bundle.candidate_slots[slot].title.trim()),
            OutputMode::Index => slot.to_string(),
        })
        .collect()
}
