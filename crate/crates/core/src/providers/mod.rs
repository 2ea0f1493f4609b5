//! Translation and embedding providers.
//!
//! A provider is split in two layers. A *backend* performs one attempt
//! against a service (or computes locally) and classifies failures as
//! transient or permanent. A *client* wraps a backend with the persistent
//! cache, the in-flight limiter and the retry/backoff loop, and is what the
//! pipeline talks to through the [`Translator`] and [`Embedder`] traits.
//!
//! Wire protocol spoken by the HTTP backends:
//!
//! ```text
//! POST {translate_endpoint} {"text": .., "source": .., "target": ..} -> 200 {"translation": ..}
//! POST {embed_endpoint}     {"text": ..}                           -> 200 {"vector": [..], "dim": n}
//! 429 / 5xx are retried, other 4xx are permanent; error bodies are {"error": ..}
//! ```

mod cache;
mod client;
mod embed;
mod http;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, CacheEntry, CacheStats, CachedPayload, DiskCache};
pub use client::{EmbeddingClient, InFlightLimiter, TranslationClient};
pub use embed::{
    cosine_similarity, test_embedder, EmbeddingVector, TestEmbedder, TEST_EMBED_DIM,
    TEST_EMBED_SEED,
};
pub use http::{HttpEmbedBackend, HttpTranslateBackend};

pub const ENV_TRANSLATE_URL: &str = "QAX_TRANSLATE_URL";
pub const ENV_EMBED_URL: &str = "QAX_EMBED_URL";
pub const ENV_API_KEY: &str = "QAX_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("empty input text")]
    EmptyInput,
    #[error("provider unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("provider rejected request with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-norm embedding vector")]
    ZeroVector,
    #[error("invalid provider response: {0}")]
    InvalidResponse(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// Outcome of a single backend attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptError {
    /// Transport failure, 429 or 5xx. Retried.
    Transient(String),
    /// Any other 4xx. Surfaced immediately.
    Permanent { status: u16, message: String },
    /// 2xx with a body that does not follow the protocol.
    Invalid(String),
    /// Vector length differs from the dimension the provider declared.
    DimensionMismatch { expected: usize, got: usize },
}

pub trait TranslateBackend: Send + Sync {
    fn id(&self) -> &str;
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, AttemptError>;
}

pub trait EmbedBackend: Send + Sync {
    fn id(&self) -> &str;
    fn embed(&self, text: &str) -> Result<Vec<f64>, AttemptError>;
}

/// Returns the input unchanged. Used for tests and same-language dry runs.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityTranslator;

impl TranslateBackend for IdentityTranslator {
    fn id(&self) -> &str {
        "identity"
    }

    fn translate(&self, text: &str, _source: &str, _target: &str) -> Result<String, AttemptError> {
        Ok(text.to_string())
    }
}

pub trait Translator: Send + Sync {
    fn translate_text(&self, text: &str) -> Result<String, ProviderError>;
    fn provider_id(&self) -> String;
}

pub trait Embedder: Send + Sync {
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
    fn provider_id(&self) -> String;
}

impl<T: Translator + ?Sized> Translator for Arc<T> {
    fn translate_text(&self, text: &str) -> Result<String, ProviderError> {
        (**self).translate_text(text)
    }
    fn provider_id(&self) -> String {
        (**self).provider_id()
    }
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        (**self).embed_text(text)
    }
    fn provider_id(&self) -> String {
        (**self).provider_id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TranslatorKind {
    #[default]
    Identity,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Test,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub translator: TranslatorKind,
    pub embedder: EmbedderKind,
    pub translate_endpoint: String,
    pub embed_endpoint: String,
    pub source_lang: String,
    pub target_lang: String,
    pub max_in_flight: usize,
    pub retry_max: u32,
    pub retry_base_ms: u64,
    pub cache_dir: Option<PathBuf>,
    /// Expected embedding dimension; `None` trusts the provider's `dim`.
    pub embed_dim: Option<usize>,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            translator: TranslatorKind::Identity,
            embedder: EmbedderKind::Test,
            translate_endpoint: String::new(),
            embed_endpoint: String::new(),
            source_lang: "en".to_string(),
            target_lang: "am".to_string(),
            max_in_flight: 8,
            retry_max: 5,
            retry_base_ms: 250,
            cache_dir: None,
            embed_dim: None,
            api_key: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("max_in_flight must be at least 1")]
    ZeroInFlight,
    #[error("retry_base_ms must be positive")]
    ZeroRetryBase,
    #[error("{0} provider selected but no endpoint configured")]
    MissingEndpoint(&'static str),
}

impl ProviderConfig {
    /// Fills endpoints and the API key from `QAX_*` variables when set.
    pub fn with_env(mut self) -> Self {
        if let Ok(url) = std::env::var(ENV_TRANSLATE_URL) {
            self.translate_endpoint = url;
        }
        if let Ok(url) = std::env::var(ENV_EMBED_URL) {
            self.embed_endpoint = url;
        }
        if let Ok(key) = std::env::var(ENV_API_KEY) {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_in_flight == 0 {
            return Err(ConfigError::ZeroInFlight);
        }
        if self.retry_base_ms == 0 {
            return Err(ConfigError::ZeroRetryBase);
        }
        if self.translator == TranslatorKind::Http && self.translate_endpoint.is_empty() {
            return Err(ConfigError::MissingEndpoint("translate"));
        }
        if self.embedder == EmbedderKind::Http && self.embed_endpoint.is_empty() {
            return Err(ConfigError::MissingEndpoint("embed"));
        }
        Ok(())
    }

    fn cache(&self) -> Option<DiskCache> {
        self.cache_dir.as_ref().map(DiskCache::new)
    }

    pub fn build_translator(&self) -> Result<Arc<dyn Translator>, ConfigError> {
        self.validate()?;
        let backend: Box<dyn TranslateBackend> = match self.translator {
            TranslatorKind::Identity => Box::new(IdentityTranslator),
            TranslatorKind::Http => Box::new(HttpTranslateBackend::new(
                &self.translate_endpoint,
                self.api_key.clone(),
            )),
        };
        Ok(Arc::new(TranslationClient::new(
            backend,
            self,
            self.cache(),
        )))
    }

    /// The local test embedder is used directly; HTTP embedders go through a
    /// caching client.
    pub fn build_embedder(&self) -> Result<Arc<dyn Embedder>, ConfigError> {
        self.validate()?;
        Ok(match self.embedder {
            EmbedderKind::Test => Arc::new(TestEmbedder),
            EmbedderKind::Http => Arc::new(EmbeddingClient::new(
                Box::new(HttpEmbedBackend::new(
                    &self.embed_endpoint,
                    self.api_key.clone(),
                )),
                self,
                self.cache(),
            )),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ProviderConfig::default();
        assert_eq!(cfg.max_in_flight, 8);
        assert_eq!(cfg.retry_max, 5);
        assert_eq!(cfg.retry_base_ms, 250);
        assert_eq!(cfg.validate(), Ok(()));
    }

    #[test]
    fn invalid_configs() {
        let cfg = ProviderConfig {
            max_in_flight: 0,
            ..Default::default()
        };
        assert_eq!(cfg.validate(), Err(ConfigError::ZeroInFlight));
        let cfg = ProviderConfig {
            retry_base_ms: 0,
            ..Default::default()
        };
        assert_eq!(cfg.validate(), Err(ConfigError::ZeroRetryBase));
        let cfg = ProviderConfig {
            translator: TranslatorKind::Http,
            ..Default::default()
        };
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::MissingEndpoint("translate"))
        );
    }

    #[test]
    fn identity_translator_via_config() {
        let t = ProviderConfig::default().build_translator().unwrap();
        assert_eq!(t.translate_text("the cat").unwrap(), "the cat");
        assert_eq!(t.translate_text("  "), Err(ProviderError::EmptyInput));
    }
}
