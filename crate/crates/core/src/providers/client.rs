use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;

use super::cache::{cache_key, now_secs, CacheEntry, CachedPayload, DiskCache};
use super::embed::EmbeddingVector;
use super::{
    AttemptError, EmbedBackend, Embedder, ProviderConfig, ProviderError, TranslateBackend,
    Translator,
};
use crate::text::normalize_text;

/// Counting semaphore bounding concurrent provider requests.
#[derive(Debug)]
pub struct InFlightLimiter {
    max: usize,
    in_flight: Mutex<usize>,
    released: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        InFlightLimiter {
            max: max.max(1),
            in_flight: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.released.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self
            .limiter
            .in_flight
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.limiter.released.notify_one();
    }
}

#[derive(Debug, Clone, Copy)]
struct RetryPolicy {
    retry_max: u32,
    base_ms: u64,
}

impl RetryPolicy {
    /// `base * 2^attempt`, scaled by a uniform factor in `[0.5, 1.0)`.
    fn delay(&self, attempt: u32) -> Duration {
        let full = self.base_ms.saturating_mul(1u64 << attempt.min(20)) as f64;
        let jitter: f64 = rand::rng().random_range(0.5..1.0);
        Duration::from_micros((full * jitter * 1000.0) as u64)
    }

    fn run<T>(
        &self,
        limiter: &InFlightLimiter,
        requests: &AtomicU64,
        mut call: impl FnMut() -> Result<T, AttemptError>,
    ) -> Result<T, ProviderError> {
        let mut last = String::new();
        for attempt in 0..=self.retry_max {
            let outcome = {
                let _permit = limiter.acquire();
                requests.fetch_add(1, Ordering::Relaxed);
                call()
            };
            match outcome {
                Ok(v) => return Ok(v),
                Err(AttemptError::Permanent { status, message }) => {
                    return Err(ProviderError::Rejected { status, message })
                }
                Err(AttemptError::Invalid(msg)) => return Err(ProviderError::InvalidResponse(msg)),
                Err(AttemptError::DimensionMismatch { expected, got }) => {
                    return Err(ProviderError::DimensionMismatch { expected, got })
                }
                Err(AttemptError::Transient(msg)) => {
                    last = msg;
                    if attempt < self.retry_max {
                        std::thread::sleep(self.delay(attempt));
                    }
                }
            }
        }
        Err(ProviderError::Unavailable {
            attempts: self.retry_max + 1,
            last,
        })
    }
}

fn check_input(text: &str) -> Result<(), ProviderError> {
    if normalize_text(text).is_empty() {
        Err(ProviderError::EmptyInput)
    } else {
        Ok(())
    }
}

/// Caching, rate-limited, retrying translation client.
pub struct TranslationClient {
    backend: Box<dyn TranslateBackend>,
    source: String,
    target: String,
    cache: Option<DiskCache>,
    limiter: Arc<InFlightLimiter>,
    retry: RetryPolicy,
    requests: AtomicU64,
}

impl TranslationClient {
    pub fn new(
        backend: Box<dyn TranslateBackend>,
        cfg: &ProviderConfig,
        cache: Option<DiskCache>,
    ) -> Self {
        TranslationClient {
            backend,
            source: cfg.source_lang.clone(),
            target: cfg.target_lang.clone(),
            cache,
            limiter: Arc::new(InFlightLimiter::new(cfg.max_in_flight)),
            retry: RetryPolicy {
                retry_max: cfg.retry_max,
                base_ms: cfg.retry_base_ms,
            },
            requests: AtomicU64::new(0),
        }
    }

    /// Shares a limiter with other clients of the same provider.
    pub fn with_limiter(mut self, limiter: Arc<InFlightLimiter>) -> Self {
        self.limiter = limiter;
        self
    }

    /// Number of backend attempts issued so far (cache hits excluded).
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn key_for(&self, text: &str) -> String {
        cache_key(
            "translate",
            self.backend.id(),
            &self.source,
            &self.target,
            text,
        )
    }
}

impl Translator for TranslationClient {
    fn translate_text(&self, text: &str) -> Result<String, ProviderError> {
        check_input(text)?;
        let key = self.key_for(text);
        if let Some(CacheEntry {
            payload: CachedPayload::Text(t),
            ..
        }) = self.cache.as_ref().and_then(|c| c.get(&key))
        {
            return Ok(t);
        }
        let out = self.retry.run(&self.limiter, &self.requests, || {
            self.backend.translate(text, &self.source, &self.target)
        })?;
        if let Some(cache) = &self.cache {
            cache.put(&CacheEntry {
                key,
                kind: "translate".into(),
                provider: self.backend.id().into(),
                source: self.source.clone(),
                target: self.target.clone(),
                text: text.into(),
                payload: CachedPayload::Text(out.clone()),
                created_at: now_secs(),
            })?;
        }
        Ok(out)
    }

    fn provider_id(&self) -> String {
        self.backend.id().to_string()
    }
}

/// Caching, rate-limited, retrying embedding client. Checks every vector
/// against the expected dimension, fixing it from the first response when
/// none is configured.
pub struct EmbeddingClient {
    backend: Box<dyn EmbedBackend>,
    expected_dim: Mutex<Option<usize>>,
    cache: Option<DiskCache>,
    limiter: Arc<InFlightLimiter>,
    retry: RetryPolicy,
    requests: AtomicU64,
}

impl EmbeddingClient {
    pub fn new(
        backend: Box<dyn EmbedBackend>,
        cfg: &ProviderConfig,
        cache: Option<DiskCache>,
    ) -> Self {
        EmbeddingClient {
            backend,
            expected_dim: Mutex::new(cfg.embed_dim),
            cache,
            limiter: Arc::new(InFlightLimiter::new(cfg.max_in_flight)),
            retry: RetryPolicy {
                retry_max: cfg.retry_max,
                base_ms: cfg.retry_base_ms,
            },
            requests: AtomicU64::new(0),
        }
    }

    pub fn with_limiter(mut self, limiter: Arc<InFlightLimiter>) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn key_for(&self, text: &str) -> String {
        cache_key("embed", self.backend.id(), "", "", text)
    }

    fn check_dim(&self, got: usize) -> Result<(), ProviderError> {
        let mut dim = self.expected_dim.lock().unwrap_or_else(|e| e.into_inner());
        match *dim {
            Some(expected) if expected != got => {
                Err(ProviderError::DimensionMismatch { expected, got })
            }
            Some(_) => Ok(()),
            None if got == 0 => Err(ProviderError::DimensionMismatch {
                expected: 1,
                got: 0,
            }),
            None => {
                *dim = Some(got);
                Ok(())
            }
        }
    }
}

impl Embedder for EmbeddingClient {
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        check_input(text)?;
        let key = self.key_for(text);
        if let Some(CacheEntry {
            payload: CachedPayload::Vector(v),
            ..
        }) = self.cache.as_ref().and_then(|c| c.get(&key))
        {
            self.check_dim(v.len())?;
            return EmbeddingVector::new(v);
        }
        let values = self
            .retry
            .run(&self.limiter, &self.requests, || self.backend.embed(text))?;
        self.check_dim(values.len())?;
        if let Some(cache) = &self.cache {
            cache.put(&CacheEntry {
                key,
                kind: "embed".into(),
                provider: self.backend.id().into(),
                source: String::new(),
                target: String::new(),
                text: text.into(),
                payload: CachedPayload::Vector(values.clone()),
                created_at: now_secs(),
            })?;
        }
        EmbeddingVector::new(values)
    }

    fn provider_id(&self) -> String {
        self.backend.id().to_string()
    }
}
