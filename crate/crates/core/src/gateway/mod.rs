//! The single boundary to completion and embedding services.
//!
//! [`Gateway`] wraps a [`Backend`] with the response cache, bounded retries,
//! a concurrency limit and call accounting. Cached completions replay the
//! stored text byte for byte and report zero latency, carrying the
//! originally recorded latency alongside for timing substitution.

pub mod cache;
pub mod http;
pub mod mock;
pub mod prompts;
pub mod structured;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use cache::{CachedCompletion, CachedEmbedding, ResponseCache};
pub use mock::MockBackend;
pub use prompts::{ExpectedOutput, PromptName, PromptTemplate};
pub use structured::parse_structured;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: PromptName,
    /// The bound template variables. Offline backends work from these.
    pub vars: BTreeMap<String, String>,
    /// The rendered prompt text sent to live backends.
    pub text: String,
    pub model: String,
    pub temperature: f32,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    pub text: String,
    pub usage: TokenUsage,
    /// Wall-clock seconds spent on this call; zero for cache hits.
    pub latency_seconds: f64,
    pub cached: bool,
    /// Latency recorded when the response was first produced.
    pub original_latency_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendCompletion {
    pub text: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone)]
pub struct EmbedResponse {
    pub vectors: Vec<Embedding>,
    pub latency_seconds: f64,
    /// Sum of recorded latencies of the cached share of the batch.
    pub replayed_latency_seconds: f64,
    pub all_cached: bool,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, req: &CompletionRequest) -> Result<BackendCompletion>;
    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>>;
}

/// A backend answering completions through a closure; embeddings use the
/// mock hashing rule. Handy for replaying recorded model output.
pub struct ScriptedBackend<F> {
    respond: F,
    embedder: MockBackend,
}

impl<F> ScriptedBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<String> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        ScriptedBackend {
            respond,
            embedder: MockBackend::default(),
        }
    }
}

impl<F> Backend for ScriptedBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<String> + Send + Sync,
{
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<BackendCompletion> {
        Ok(BackendCompletion {
            text: (self.respond)(req)?,
            usage: TokenUsage::default(),
        })
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        self.embedder.embed(model, texts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySettings {
    pub chat_model: String,
    pub embedding_model: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub concurrency: usize,
    pub embed_batch_size: usize,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            chat_model: "gpt-4o".into(),
            embedding_model: "text-embedding-3-small".into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            max_attempts: 3,
            backoff_base_ms: 500,
            concurrency: 8,
            embed_batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub live_completions: u64,
    pub cached_completions: u64,
    pub live_embeddings: u64,
    pub cached_embeddings: u64,
    pub failed_calls: u64,
    pub live_latency_seconds: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Limiter {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock();
        while *n >= self.max {
            self.freed.wait(&mut n);
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock() -= 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: ResponseCache,
    settings: GatewaySettings,
    limiter: Limiter,
    stats: Mutex<GatewayStats>,
    peak_in_flight: Mutex<usize>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, cache: ResponseCache, settings: GatewaySettings) -> Self {
        Gateway {
            limiter: Limiter::new(settings.concurrency),
            backend,
            cache,
            settings,
            stats: Mutex::new(GatewayStats::default()),
            peak_in_flight: Mutex::new(0),
        }
    }

    /// Mock backend with an in-memory cache.
    pub fn mock() -> Self {
        Gateway::new(
            Arc::new(MockBackend::default()),
            ResponseCache::in_memory(),
            GatewaySettings {
                chat_model: "mock".into(),
                embedding_model: "mock-hash-256".into(),
                ..GatewaySettings::default()
            },
        )
    }

    pub fn settings(&self) -> &GatewaySettings {
        &self.settings
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn stats(&self) -> GatewayStats {
        self.stats.lock().clone()
    }

    pub fn peak_in_flight(&self) -> usize {
        *self.peak_in_flight.lock()
    }

    pub fn request(
        &self,
        prompt: PromptName,
        vars: BTreeMap<String, String>,
        max_tokens: Option<u32>,
    ) -> Result<CompletionRequest> {
        let text = prompts::template(prompt).render(&vars)?;
        Ok(CompletionRequest {
            prompt,
            vars,
            text,
            model: self.settings.chat_model.clone(),
            temperature: self.settings.temperature,
            max_tokens: max_tokens.unwrap_or(self.settings.max_output_tokens),
        })
    }

    /// Render `prompt` with `vars` and complete it.
    pub fn prompt(
        &self,
        prompt: PromptName,
        vars: &[(&str, &str)],
        max_tokens: Option<u32>,
    ) -> Result<CompletionResponse> {
        let vars = vars
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let req = self.request(prompt, vars, max_tokens)?;
        self.complete(&req)
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse> {
        if req.text.trim().is_empty() {
            return Err(Error::Precondition("empty prompt".into()));
        }
        let key = cache::completion_key(&req.model, &req.text, req.temperature, req.max_tokens);
        if let Some(hit) = self.cache.get_completion(&key) {
            self.stats.lock().cached_completions += 1;
            return Ok(CompletionResponse {
                text: hit.text,
                usage: hit.usage,
                latency_seconds: 0.0,
                cached: true,
                original_latency_seconds: Some(hit.latency_seconds),
            });
        }

        let started = Instant::now();
        let out = self.with_retries(|| self.backend.complete(req))?;
        let latency = started.elapsed().as_secs_f64();
        if out.text.trim().is_empty() {
            self.stats.lock().failed_calls += 1;
            return Err(Error::EmptyResponse);
        }
        {
            let mut s = self.stats.lock();
            s.live_completions += 1;
            s.live_latency_seconds += latency;
            s.prompt_tokens += out.usage.prompt_tokens;
            s.completion_tokens += out.usage.completion_tokens;
        }
        self.cache.put_completion(
            &key,
            CachedCompletion {
                model: req.model.clone(),
                text: out.text.clone(),
                usage: out.usage,
                latency_seconds: latency,
            },
        )?;
        Ok(CompletionResponse {
            text: out.text,
            usage: out.usage,
            latency_seconds: latency,
            cached: false,
            original_latency_seconds: Some(latency),
        })
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        Ok(self.embed_timed(texts)?.vectors)
    }

    pub fn embed_timed(&self, texts: &[String]) -> Result<EmbedResponse> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::Precondition(format!("text {i} to embed is empty")));
        }
        let model = self.settings.embedding_model.clone();
        let keys: Vec<String> = texts.iter().map(|t| cache::embedding_key(&model, t)).collect();
        let mut found: Vec<Option<Vec<f32>>> = vec![None; texts.len()];
        let mut replayed = 0.0;
        let mut misses: Vec<usize> = Vec::new();
        let mut pending: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, key) in keys.iter().enumerate() {
            if let Some(hit) = self.cache.get_embedding(key) {
                replayed += hit.latency_seconds;
                found[i] = Some(hit.vector);
            } else if !pending.contains_key(key.as_str()) {
                pending.insert(key, i);
                misses.push(i);
            }
        }
        let cached_count = found.iter().filter(|f| f.is_some()).count();

        let started = Instant::now();
        let batch = self.settings.embed_batch_size.max(1);
        for group in misses.chunks(batch) {
            let batch_texts: Vec<String> = group.iter().map(|&i| texts[i].clone()).collect();
            let t0 = Instant::now();
            let vectors = self.with_retries(|| self.backend.embed(&model, &batch_texts))?;
            let per_item = t0.elapsed().as_secs_f64() / group.len() as f64;
            if vectors.len() != group.len() {
                return Err(Error::Internal(format!(
                    "backend returned {} vectors for {} texts",
                    vectors.len(),
                    group.len()
                )));
            }
            for (&i, v) in group.iter().zip(vectors) {
                Embedding::new(v.clone())?;
                self.cache.put_embedding(
                    &keys[i],
                    CachedEmbedding {
                        model: model.clone(),
                        vector: v.clone(),
                        latency_seconds: per_item,
                    },
                )?;
                found[i] = Some(v);
            }
        }
        let latency = if misses.is_empty() {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        };
        for i in 0..texts.len() {
            if found[i].is_none() {
                // duplicate of a text embedded in this call
                let first = pending[keys[i].as_str()];
                found[i] = found[first].clone();
            }
        }

        let vectors: Vec<Embedding> = found.into_iter().map(|v| Embedding(v.unwrap_or_default())).collect();
        if let Some(first) = vectors.first() {
            if vectors.iter().any(|v| v.dim() != first.dim()) {
                return Err(Error::Internal("embedding dims differ within a batch".into()));
            }
        }
        {
            let mut s = self.stats.lock();
            s.cached_embeddings += cached_count as u64;
            s.live_embeddings += misses.len() as u64;
            s.live_latency_seconds += latency;
        }
        Ok(EmbedResponse {
            vectors,
            latency_seconds: latency,
            replayed_latency_seconds: replayed,
            all_cached: misses.is_empty(),
        })
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T>) -> Result<T> {
        let attempts = self.settings.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            {
                let _permit = self.limiter.acquire();
                {
                    let n = *self.limiter.in_flight.lock();
                    let mut peak = self.peak_in_flight.lock();
                    *peak = (*peak).max(n);
                }
                match call() {
                    Ok(v) => return Ok(v),
                    Err(e @ Error::Gateway(_)) => {
                        tracing::warn!(attempt = attempt + 1, error = %e, "backend call failed");
                        last = Some(e);
                    }
                    Err(e) => return Err(e),
                }
            }
            if attempt + 1 < attempts {
                let delay = self.settings.backoff_base_ms.saturating_mul(1 << attempt);
                std::thread::sleep(Duration::from_millis(delay));
            }
        }
        self.stats.lock().failed_calls += 1;
        Err(last.unwrap_or_else(|| Error::Gateway("no attempts made".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn quick_settings() -> GatewaySettings {
        GatewaySettings {
            backoff_base_ms: 0,
            ..GatewaySettings::default()
        }
    }

    #[test]
    fn second_call_is_served_from_cache() {
        let gw = Gateway::mock();
        let a = gw
            .prompt(PromptName::Summarize, &[("text", "A. B. C.")], None)
            .unwrap();
        let b = gw
            .prompt(PromptName::Summarize, &[("text", "A. B. C.")], None)
            .unwrap();
        assert_eq!(a.text, "A.");
        assert_eq!(a.text, b.text);
        assert!(!a.cached && b.cached);
        assert_eq!(b.latency_seconds, 0.0);
        assert_eq!(gw.stats().live_completions, 1);
        assert_eq!(gw.stats().cached_completions, 1);
    }

    #[test]
    fn transport_failures_retry_then_fail() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let backend = ScriptedBackend::new(move |_req: &CompletionRequest| {
            c.fetch_add(1, Ordering::SeqCst);
            Err(Error::Gateway("connection refused".into()))
        });
        let gw = Gateway::new(Arc::new(backend), ResponseCache::in_memory(), quick_settings());
        let err = gw.prompt(PromptName::Topic, &[("paragraph", "x")], None).unwrap_err();
        assert!(matches!(err, Error::Gateway(_)));
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert_eq!(gw.stats().failed_calls, 1);
    }

    #[test]
    fn transient_failure_recovers() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let backend = ScriptedBackend::new(move |_req: &CompletionRequest| {
            if c.fetch_add(1, Ordering::SeqCst) == 0 {
                Err(Error::Gateway("503".into()))
            } else {
                Ok("fine".into())
            }
        });
        let gw = Gateway::new(Arc::new(backend), ResponseCache::in_memory(), quick_settings());
        let r = gw.prompt(PromptName::Topic, &[("paragraph", "x")], None).unwrap();
        assert_eq!(r.text, "fine");
    }

    #[test]
    fn empty_response_is_an_error() {
        let backend = ScriptedBackend::new(|_req: &CompletionRequest| Ok("  ".into()));
        let gw = Gateway::new(Arc::new(backend), ResponseCache::in_memory(), quick_settings());
        assert!(matches!(
            gw.prompt(PromptName::Topic, &[("paragraph", "x")], None),
            Err(Error::EmptyResponse)
        ));
    }

    #[test]
    fn embeddings_are_deterministic_and_uniform() {
        let gw = Gateway::mock();
        let v = gw.embed(&["x".to_string(), "x".to_string()]).unwrap();
        assert_eq!(v[0], v[1]);
        let v = gw
            .embed(&["a b".to_string(), "c".to_string(), "d e f".to_string()])
            .unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|e| e.dim() == 256 && e.is_unit()));
        assert!(gw.embed(&["".to_string()]).is_err());
    }

    #[test]
    fn concurrency_is_bounded() {
        let backend = ScriptedBackend::new(|_req: &CompletionRequest| {
            std::thread::sleep(Duration::from_millis(5));
            Ok("ok".into())
        });
        let gw = Gateway::new(
            Arc::new(backend),
            ResponseCache::in_memory(),
            GatewaySettings {
                concurrency: 2,
                ..quick_settings()
            },
        );
        std::thread::scope(|s| {
            for i in 0..8 {
                let gw = &gw;
                s.spawn(move || {
                    gw.prompt(PromptName::Topic, &[("paragraph", &format!("p{i}"))], None)
                        .unwrap();
                });
            }
        });
        assert!(gw.peak_in_flight() <= 2);
        assert_eq!(gw.stats().live_completions, 8);
    }
}
