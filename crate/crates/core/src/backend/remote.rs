//! OpenAI-compatible HTTP client and the evidence page fetcher.

use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::limiter::{Clock, InFlight, RateLimiter, SystemClock};
use super::{check_dimensions, BackendConfig, BackendError, ChatBackend, ChatRequest, Embedder};

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// Chat and embeddings over `/chat/completions` and `/embeddings`.
pub struct OpenAiCompatible {
    config: BackendConfig,
    api_key: String,
    agent: ureq::Agent,
    limiter: Option<RateLimiter>,
    in_flight: InFlight,
    clock: Arc<dyn Clock>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

impl OpenAiCompatible {
    /// Fails before any network traffic when the config is invalid or the
    /// API key variable is unset.
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        Self::with_clock(config, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(config: BackendConfig, clock: Arc<dyn Clock>) -> Result<Self, BackendError> {
        config.validate()?;
        let api_key = config.api_key()?;
        let limiter = config
            .rate_limit_per_min
            .map(|limit| RateLimiter::per_minute(limit, clock.clone()));
        Ok(Self {
            agent: agent(config.timeout()),
            in_flight: InFlight::new(config.max_in_flight),
            api_key,
            limiter,
            clock,
            config,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.config.endpoint.trim_end_matches('/'))
    }

    fn post_once(&self, url: &str, body: &serde_json::Value) -> Result<String, BackendError> {
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        let _slot = self.in_flight.enter();
        let mut response = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => Ok(text),
            401 | 403 => Err(BackendError::Auth { status, body: text }),
            _ => Err(BackendError::Http { status, body: text }),
        }
    }

    /// POST with exponential backoff on transient failures.
    fn post(&self, path: &str, body: &serde_json::Value) -> Result<String, BackendError> {
        let url = self.url(path);
        let attempts = self.config.max_retries + 1;
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        for attempt in 1..=attempts {
            match self.post_once(&url, body) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && attempt < attempts => {
                    log::warn!("{path}: attempt {attempt} failed ({e}); retrying in {delay:?}");
                    self.clock.sleep(delay);
                    delay *= 2;
                }
                Err(e) if e.is_transient() => {
                    return Err(BackendError::RetriesExhausted {
                        attempts,
                        last: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}

impl ChatBackend for OpenAiCompatible {
    fn chat_complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        });
        let text = self.post("chat/completions", &body)?;
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no choices in completion".into()))
    }
}

impl Embedder for OpenAiCompatible {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        let model = self
            .config
            .embedding_model
            .clone()
            .unwrap_or_else(|| self.config.model.clone());
        let mut out = Vec::with_capacity(texts.len());
        for (batch, chunk) in texts.chunks(self.config.embed_batch_size).enumerate() {
            let body = json!({ "model": model, "input": chunk });
            let wrap = |e: BackendError| BackendError::Batch {
                batch,
                source: Box::new(e),
            };
            let text = self.post("embeddings", &body).map_err(wrap)?;
            let mut parsed: EmbeddingResponse = serde_json::from_str(&text)
                .map_err(|e| wrap(BackendError::Malformed(e.to_string())))?;
            if parsed.data.len() != chunk.len() {
                return Err(wrap(BackendError::Malformed(format!(
                    "{} embeddings for {} inputs",
                    parsed.data.len(),
                    chunk.len()
                ))));
            }
            parsed.data.sort_by_key(|d| d.index.unwrap_or(usize::MAX));
            out.extend(parsed.data.into_iter().map(|d| d.embedding));
            check_dimensions(&out, batch)?;
        }
        Ok(out)
    }
}

/// Raw HTTP response for a fetched page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

pub trait PageFetcher: Send + Sync {
    fn fetch_page(&self, url: &str) -> Result<Page, BackendError>;
}

/// GET with a timeout and a fixed number of retries on transport errors
/// and 5xx responses.
pub struct HttpFetcher {
    agent: ureq::Agent,
    retries: u32,
    user_agent: String,
}

impl HttpFetcher {
    pub fn new(timeout: Duration, retries: u32) -> Self {
        Self {
            agent: agent(timeout),
            retries,
            user_agent: concat!("groundcheck/", env!("CARGO_PKG_VERSION")).into(),
        }
    }
}

impl Default for HttpFetcher {
    fn default() -> Self {
        Self::new(Duration::from_secs(20), 1)
    }
}

impl PageFetcher for HttpFetcher {
    fn fetch_page(&self, url: &str) -> Result<Page, BackendError> {
        let mut last = None;
        for _ in 0..=self.retries {
            let result = self
                .agent
                .get(url)
                .header("User-Agent", &self.user_agent)
                .call()
                .map_err(|e| BackendError::Transport(e.to_string()))
                .and_then(|mut response| {
                    let status = response.status().as_u16();
                    let content_type = response
                        .headers()
                        .get("content-type")
                        .and_then(|v| v.to_str().ok())
                        .map(str::to_string);
                    let body = response
                        .body_mut()
                        .with_config()
                        .limit(20 * 1024 * 1024)
                        .read_to_vec()
                        .map_err(|e| BackendError::Transport(e.to_string()))?;
                    Ok(Page {
                        status,
                        content_type,
                        body,
                    })
                });
            match result {
                Ok(page) if page.status < 500 => return Ok(page),
                Ok(page) => last = Some(Ok(page)),
                Err(e) => last = Some(Err(e)),
            }
        }
        last.expect("at least one attempt")
    }
}

/// Fetcher for offline runs: every page that is not cached fails.
#[derive(Debug, Default, Clone, Copy)]
pub struct OfflineFetcher;

impl PageFetcher for OfflineFetcher {
    fn fetch_page(&self, url: &str) -> Result<Page, BackendError> {
        Err(BackendError::Transport(format!("offline: {url} is not cached")))
    }
}
