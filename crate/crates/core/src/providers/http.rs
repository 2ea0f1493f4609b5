use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{AttemptError, EmbedBackend, TranslateBackend};

const TIMEOUT: Duration = Duration::from_secs(120);

fn agent() -> Agent {
    Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(TIMEOUT))
        .build()
        .into()
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    translation: String,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
    dim: usize,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

struct JsonEndpoint {
    url: String,
    api_key: Option<String>,
    agent: Agent,
}

impl JsonEndpoint {
    fn new(url: &str, api_key: Option<String>) -> Self {
        JsonEndpoint {
            url: url.to_string(),
            api_key,
            agent: agent(),
        }
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        body: &Req,
    ) -> Result<Resp, AttemptError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| AttemptError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if resp.status().is_success() {
            return resp
                .body_mut()
                .read_json::<Resp>()
                .map_err(|e| AttemptError::Invalid(e.to_string()));
        }
        let message = resp
            .body_mut()
            .read_to_string()
            .ok()
            .and_then(|s| {
                serde_json::from_str::<ErrorBody>(&s)
                    .map(|b| b.error)
                    .ok()
                    .or(Some(s))
            })
            .unwrap_or_default();
        match status {
            429 | 500..=599 => Err(AttemptError::Transient(format!(
                "status {status}: {message}"
            ))),
            400..=499 => Err(AttemptError::Permanent { status, message }),
            _ => Err(AttemptError::Invalid(format!("unexpected status {status}"))),
        }
    }
}

/// Translation over the JSON wire protocol.
pub struct HttpTranslateBackend {
    endpoint: JsonEndpoint,
    id: String,
}

impl HttpTranslateBackend {
    pub fn new(url: &str, api_key: Option<String>) -> Self {
        HttpTranslateBackend {
            endpoint: JsonEndpoint::new(url, api_key),
            id: format!("http:{url}"),
        }
    }
}

impl TranslateBackend for HttpTranslateBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, AttemptError> {
        let resp: TranslateResponse = self.endpoint.post(&TranslateRequest {
            text,
            source,
            target,
        })?;
        Ok(resp.translation)
    }
}

/// Embedding over the JSON wire protocol. A response whose `dim` disagrees
/// with its vector length is a dimension mismatch.
pub struct HttpEmbedBackend {
    endpoint: JsonEndpoint,
    id: String,
}

impl HttpEmbedBackend {
    pub fn new(url: &str, api_key: Option<String>) -> Self {
        HttpEmbedBackend {
            endpoint: JsonEndpoint::new(url, api_key),
            id: format!("http:{url}"),
        }
    }
}

impl EmbedBackend for HttpEmbedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, AttemptError> {
        let resp: EmbedResponse = self.endpoint.post(&EmbedRequest { text })?;
        if resp.vector.len() != resp.dim {
            return Err(AttemptError::DimensionMismatch {
                expected: resp.dim,
                got: resp.vector.len(),
            });
        }
        Ok(resp.vector)
    }
}
