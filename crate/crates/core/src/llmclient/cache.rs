use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{Completer, CompletionRequest, LlmError};
use crate::seed::sha256_hex;

/// Hex SHA-256 over the prompt, backend identity, temperature and attempt.
pub fn cache_key(prompt: &str, identity: &str, temperature: f64, attempt: u32) -> String {
    let payload = serde_json::json!({
        "prompt": prompt,
        "model": identity,
        "temperature": temperature,
        "attempt": attempt,
    });
    sha256_hex(payload.to_string().as_bytes())
}

/// Directory of response files, `<key[..2]>/<key>.txt`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResponseCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.txt"))
    }

    pub fn get(&self, key: &str) -> Result<Option<String>, LlmError> {
        let path = self.path(key);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(LlmError::Cache {
                path: path.display().to_string(),
                source,
            }),
        }
    }

    /// Writes via a temporary file and rename, so concurrent writers of the
    /// same key never leave a torn file behind.
    pub fn put(&self, key: &str, value: &str) -> Result<(), LlmError> {
        let path = self.path(key);
        let err = |source| LlmError::Cache {
            path: path.display().to_string(),
            source,
        };
        let dir = path.parent().expect("cache path has a parent");
        fs::create_dir_all(dir).map_err(err)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
        tmp.write_all(value.as_bytes()).map_err(err)?;
        tmp.persist(&path).map_err(|e| err(e.error))?;
        Ok(())
    }
}

/// Wraps a backend with an optional response cache and counts the calls
/// that reached the backend.
pub struct CachedCompleter<C> {
    inner: C,
    cache: Option<ResponseCache>,
    misses: AtomicUsize,
    hits: AtomicUsize,
}

impl<C: Completer> CachedCompleter<C> {
    pub fn new(inner: C, cache: Option<ResponseCache>) -> Self {
        CachedCompleter {
            inner,
            cache,
            misses: AtomicUsize::new(0),
            hits: AtomicUsize::new(0),
        }
    }

    /// Requests answered by the wrapped backend.
    pub fn backend_calls(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: Completer> Completer for CachedCompleter<C> {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, LlmError> {
        let Some(cache) = &self.cache else {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return self.inner.complete(req);
        };
        let key = cache_key(
            &req.bundle.text,
            &self.inner.cache_identity(),
            self.inner.temperature(),
            req.attempt,
        );
        if let Some(hit) = cache.get(&key)? {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let text = self.inner.complete(req)?;
        cache.put(&key, &text)?;
        Ok(text)
    }

    fn cache_identity(&self) -> String {
        self.inner.cache_identity()
    }

    fn temperature(&self) -> f64 {
        self.inner.temperature()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::OracleLlm;
    use crate::promptkit::{CandidateSlot, OutputMode, PromptBundle, StrategyKind};

    #[test]
    fn second_request_is_served_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let b = PromptBundle {
            user: "u".into(),
            text: "rank these".into(),
            candidate_slots: (0..3)
                .map(|slot| CandidateSlot {
                    slot,
                    item: format!("c{slot}").into(),
                    title: format!("T{slot}"),
                })
                .collect(),
            output_mode: OutputMode::Index,
            strategy: StrategyKind::Sequential,
            domain: "movies".into(),
            history: vec![],
        };
        let req = CompletionRequest {
            bundle: &b,
            ground_truth: None,
            attempt: 0,
        };
        let c = CachedCompleter::new(OracleLlm, Some(ResponseCache::new(dir.path())));
        let first = c.complete(&req).unwrap();
        assert_eq!(c.complete(&req).unwrap(), first);
        assert_eq!((c.backend_calls(), c.cache_hits()), (1, 1));
        c.complete(&CompletionRequest { attempt: 1, ..req }).unwrap();
        assert_eq!(c.backend_calls(), 2);

        // a fresh wrapper over the same directory makes no backend calls
        let again = CachedCompleter::new(OracleLlm, Some(ResponseCache::new(dir.path())));
        assert_eq!(again.complete(&req).unwrap(), first);
        assert_eq!(again.backend_calls(), 0);
    }

    #[test]
    fn keys_separate_every_component() {
        let base = cache_key("p", "m", 0.2, 0);
        assert_eq!(base, cache_key("p", "m", 0.2, 0));
        for other in [
            cache_key("q", "m", 0.2, 0),
            cache_key("p", "n", 0.2, 0),
            cache_key("p", "m", 0.3, 0),
            cache_key("p", "m", 0.2, 1),
        ] {
            assert_ne!(base, other);
        }
    }
}
