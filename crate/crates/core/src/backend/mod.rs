//! Chat-completion and embedding backends.
//!
//! Every network connection the crate opens goes through this module: the
//! OpenAI-compatible remote client and the page fetcher used for evidence
//! documents. The scripted mock never touches the network.

mod limiter;
mod mock;
mod remote;

pub use limiter::{Clock, InFlight, RateLimiter, SystemClock, VirtualClock};
pub use mock::{hashed_embedding, load_mock, EmbeddingMode, MockBackend, MockRule, MockScript};
pub use remote::{HttpFetcher, OfflineFetcher, OpenAiCompatible, Page, PageFetcher};

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_API_KEY_ENV: &str = "GROUNDCHECK_API_KEY";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("authentication failed ({status}): {body}")]
    Auth { status: u16, body: String },
    #[error("request failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response body: {0}")]
    Malformed(String),
    #[error("embedding batch {batch}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        batch: usize,
        expected: usize,
        got: usize,
    },
    #[error("embedding batch {batch} failed: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: Box<BackendError>,
    },
    #[error("mock script: {0}")]
    Mock(String),
}

impl BackendError {
    /// Worth retrying: rate limiting, server errors, and transport failures.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            BackendError::Transport(_) => true,
            _ => false,
        }
    }
}

/// A single-turn completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    /// Name of the prompt asset that produced `prompt`, used by mock scripts.
    pub task: Option<String>,
    pub prompt: String,
    pub temperature: f32,
}

impl ChatRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            task: None,
            prompt: prompt.into(),
            temperature: 0.0,
        }
    }

    pub fn with_task(mut self, task: impl Into<String>) -> Self {
        self.task = Some(task.into());
        self
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat_complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

pub trait Embedder: Send + Sync {
    /// One vector per input text, all of the same dimension.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError>;
}

/// Checks that every vector has the dimension of the first one.
pub fn check_dimensions(vectors: &[Vec<f32>], batch: usize) -> Result<usize, BackendError> {
    let Some(first) = vectors.first() else {
        return Ok(0);
    };
    let expected = first.len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != expected) {
        return Err(BackendError::DimensionMismatch {
            batch,
            expected,
            got: bad.len(),
        });
    }
    Ok(expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Base URL of the compatible API, e.g. `http://localhost:8000/v1`.
    pub endpoint: String,
    pub model: String,
    pub embedding_model: Option<String>,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Requests per minute; `None` disables limiting.
    pub rate_limit_per_min: Option<u32>,
    pub embed_batch_size: usize,
    pub max_in_flight: usize,
    pub backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".into(),
            model: "llama-3.3-70b-instruct".into(),
            embedding_model: None,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 120.0,
            max_retries: 3,
            rate_limit_per_min: None,
            embed_batch_size: 128,
            max_in_flight: 4,
            backoff_ms: 500,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(BackendError::Config(format!(
                "timeout must be positive, got {}",
                self.timeout_secs
            )));
        }
        if self.embed_batch_size == 0 {
            return Err(BackendError::Config("embed_batch_size must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be at least 1".into()));
        }
        if self.rate_limit_per_min == Some(0) {
            return Err(BackendError::Config("rate limit must be at least 1 request/min".into()));
        }
        url::Url::parse(&self.endpoint)
            .map_err(|e| BackendError::Config(format!("endpoint {:?}: {e}", self.endpoint)))?;
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Reads the API key from the configured environment variable.
    pub fn api_key(&self) -> Result<String, BackendError> {
        match std::env::var(&self.api_key_env) {
            Ok(key) if !key.is_empty() => Ok(key),
            _ => Err(BackendError::Config(format!(
                "environment variable {} is not set",
                self.api_key_env
            ))),
        }
    }
}

/// The chat and embedding capabilities a pipeline run needs.
#[derive(Clone)]
pub struct Backends {
    pub chat: Arc<dyn ChatBackend>,
    pub embedder: Arc<dyn Embedder>,
}

impl Backends {
    pub fn mock(mock: MockBackend) -> Self {
        let shared = Arc::new(mock);
        Self {
            chat: shared.clone(),
            embedder: shared,
        }
    }

    pub fn remote(config: BackendConfig) -> Result<Self, BackendError> {
        let shared = Arc::new(OpenAiCompatible::new(config)?);
        Ok(Self {
            chat: shared.clone(),
            embedder: shared,
        })
    }
}
