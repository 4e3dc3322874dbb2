use std::fmt;
use std::time::Duration;

use serde_json::json;
use ureq::Agent;

use super::{Completer, CompletionRequest, LlmConfig, LlmError};

/// Blocking client for an OpenAI-compatible chat-completions endpoint.
pub struct LiveClient {
    config: LlmConfig,
    api_key: Option<String>,
    agent: Agent,
}

impl fmt::Debug for LiveClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiveClient")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

enum Failure {
    Retry(String),
    Fatal(LlmError),
}

impl LiveClient {
    /// Reads the bearer token from `config.api_key_env`; requests are sent
    /// without authorization when the variable is unset.
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; sending unauthenticated requests", config.api_key_env);
        }
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(LiveClient {
            config,
            api_key,
            agent,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint_url.trim_end_matches('/'))
    }

    fn attempt_once(&self, body: &str) -> Result<String, Failure> {
        let mut req = self
            .agent
            .post(self.url())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| Failure::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retry(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(Failure::Retry(format!("status {status}: {text}")));
        }
        if !(200..300).contains(&status) {
            return Err(Failure::Fatal(LlmError::Status { status, body: text }));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Failure::Fatal(LlmError::BadResponse(e.to_string())))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Failure::Fatal(LlmError::BadResponse(text)))
    }
}

impl Completer for LiveClient {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, LlmError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": req.bundle.text}],
            "temperature": self.config.temperature,
        })
        .to_string();
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::info!("retrying in {delay} ms after: {last}");
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt_once(&body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => last = msg,
            }
        }
        Err(LlmError::RetriesExhausted { attempts, last })
    }

    fn cache_identity(&self) -> String {
        self.config.model_name.clone()
    }

    fn temperature(&self) -> f64 {
        self.config.temperature
    }
}
