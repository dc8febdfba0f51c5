//! Evidence documents: fetching and caching cited pages, fixed-size
//! chunking, and exact cosine retrieval.

mod html;
mod index;

pub use html::extract_text;
pub use index::{build_index, EvidenceIndex, RetrievalResult, RetrievedChunk};

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{BackendError, PageFetcher};
use crate::transcript::extract_domain;

pub const DEFAULT_CHUNK_CHARS: usize = 500;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("cache {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cache sidecar {path}: {source}")]
    Sidecar {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("chunk {doc_url}#{ordinal} is empty")]
    EmptyChunk { doc_url: String, ordinal: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("query dimension {got} does not match index dimension {expected}")]
    QueryDimension { expected: usize, got: usize },
    #[error("embedder returned {got} vectors for {expected} chunks")]
    VectorCount { expected: usize, got: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DocumentStatus {
    Ok,
    FetchFailed,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub url: String,
    pub domain: String,
    pub text: String,
    /// Seconds since the Unix epoch.
    pub fetched_at: u64,
    pub status: DocumentStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Document {
    pub fn ok(url: &str, text: impl Into<String>, fetched_at: u64) -> Self {
        let text = text.into();
        let status = if text.trim().is_empty() {
            DocumentStatus::Empty
        } else {
            DocumentStatus::Ok
        };
        Self {
            url: url.into(),
            domain: extract_domain(url).unwrap_or_default(),
            text,
            fetched_at,
            status,
            reason: None,
        }
    }

    pub fn failed(url: &str, reason: impl Into<String>, fetched_at: u64) -> Self {
        Self {
            url: url.into(),
            domain: extract_domain(url).unwrap_or_default(),
            text: String::new(),
            fetched_at,
            status: DocumentStatus::FetchFailed,
            reason: Some(reason.into()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    url: String,
    domain: String,
    fetched_at: u64,
    status: DocumentStatus,
    #[serde(default)]
    reason: Option<String>,
}

/// Content-addressed document cache: `<sha256(url)>.txt` holds the text and
/// `<sha256(url)>.json` the metadata.
#[derive(Debug)]
pub struct DocumentCache {
    dir: PathBuf,
    writers: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

pub fn url_key(url: &str) -> String {
    hex::encode(Sha256::digest(url.as_bytes()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "tmp{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

impl DocumentCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, EvidenceError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| EvidenceError::Cache {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir,
            writers: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn paths(&self, url: &str) -> (PathBuf, PathBuf) {
        let key = url_key(url);
        (self.dir.join(format!("{key}.json")), self.dir.join(format!("{key}.txt")))
    }

    fn writer_lock(&self, url: &str) -> Arc<Mutex<()>> {
        self.writers
            .lock()
            .unwrap()
            .entry(url.to_string())
            .or_default()
            .clone()
    }

    pub fn get(&self, url: &str) -> Result<Option<Document>, EvidenceError> {
        let (meta_path, text_path) = self.paths(url);
        let meta = match std::fs::read_to_string(&meta_path) {
            Ok(m) => m,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => {
                return Err(EvidenceError::Cache {
                    path: meta_path.display().to_string(),
                    source,
                })
            }
        };
        let sidecar: Sidecar = serde_json::from_str(&meta).map_err(|source| EvidenceError::Sidecar {
            path: meta_path.display().to_string(),
            source,
        })?;
        let text = match std::fs::read_to_string(&text_path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(source) => {
                return Err(EvidenceError::Cache {
                    path: text_path.display().to_string(),
                    source,
                })
            }
        };
        Ok(Some(Document {
            url: sidecar.url,
            domain: sidecar.domain,
            text,
            fetched_at: sidecar.fetched_at,
            status: sidecar.status,
            reason: sidecar.reason,
        }))
    }

    pub fn put(&self, doc: &Document) -> Result<(), EvidenceError> {
        let lock = self.writer_lock(&doc.url);
        let _guard = lock.lock().unwrap();
        let (meta_path, text_path) = self.paths(&doc.url);
        let sidecar = Sidecar {
            url: doc.url.clone(),
            domain: doc.domain.clone(),
            fetched_at: doc.fetched_at,
            status: doc.status,
            reason: doc.reason.clone(),
        };
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| EvidenceError::Cache { path, source }
        };
        write_atomic(&text_path, doc.text.as_bytes()).map_err(io(&text_path))?;
        let meta = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
        write_atomic(&meta_path, &meta).map_err(io(&meta_path))?;
        Ok(())
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn page_to_document(url: &str, page: crate::backend::Page, fetched_at: u64) -> Document {
    if !(200..300).contains(&page.status) {
        return Document::failed(url, format!("HTTP {}", page.status), fetched_at);
    }
    let content_type = page
        .content_type
        .as_deref()
        .map(|c| c.split(';').next().unwrap_or("").trim().to_ascii_lowercase());
    let body = String::from_utf8_lossy(&page.body);
    let looks_html = body.trim_start().starts_with('<');
    let text = match content_type.as_deref() {
        Some("text/html") | Some("application/xhtml+xml") => extract_text(&body),
        Some("text/plain") => body.split_whitespace().collect::<Vec<_>>().join(" "),
        None if looks_html => extract_text(&body),
        Some(other) => {
            return Document::failed(url, format!("unsupported content type {other}"), fetched_at)
        }
        None => return Document::failed(url, "unsupported content type (none)", fetched_at),
    };
    Document::ok(url, text, fetched_at)
}

/// Returns the cached document, or fetches, extracts and caches it. Fetch
/// failures come back as `FetchFailed` documents and are cached too.
pub fn fetch(url: &str, cache: &DocumentCache, fetcher: &dyn PageFetcher) -> Result<Document, EvidenceError> {
    if let Some(doc) = cache.get(url)? {
        return Ok(doc);
    }
    let fetched_at = now_secs();
    let doc = match fetcher.fetch_page(url) {
        Ok(page) => page_to_document(url, page, fetched_at),
        Err(e) => Document::failed(url, e.to_string(), fetched_at),
    };
    cache.put(&doc)?;
    Ok(doc)
}

/// Fetches many URLs with up to `parallelism` hosts in flight and one
/// request at a time per host. Results are keyed by URL.
pub fn fetch_all(
    urls: &[String],
    cache: &DocumentCache,
    fetcher: &dyn PageFetcher,
    parallelism: usize,
) -> Result<BTreeMap<String, Document>, EvidenceError> {
    let mut by_host: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for url in urls {
        if seen.insert(url.as_str()) {
            let host = extract_domain(url).unwrap_or_default();
            by_host.entry(host).or_default().push(url.clone());
        }
    }
    let queue = Mutex::new(by_host.into_values().collect::<VecDeque<_>>());
    let results = Mutex::new(BTreeMap::new());
    let failure = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..parallelism.max(1) {
            scope.spawn(|| loop {
                let Some(host_urls) = queue.lock().unwrap().pop_front() else {
                    break;
                };
                for url in host_urls {
                    match fetch(&url, cache, fetcher) {
                        Ok(doc) => {
                            results.lock().unwrap().insert(url, doc);
                        }
                        Err(e) => {
                            failure.lock().unwrap().get_or_insert(e);
                            return;
                        }
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(results.into_inner().unwrap())
}

/// A fixed-length piece of a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceChunk {
    pub doc_url: String,
    pub ordinal: usize,
    pub text: String,
}

/// Non-overlapping windows of `size` Unicode scalar values; only the last
/// chunk may be shorter. Documents without usable text give no chunks.
pub fn chunk(document: &Document, size: usize) -> Vec<EvidenceChunk> {
    assert!(size > 0, "chunk size must be positive");
    if document.status != DocumentStatus::Ok {
        return Vec::new();
    }
    let mut chunks = Vec::new();
    let mut start = 0;
    let text = &document.text;
    let mut count = 0;
    for (i, _) in text.char_indices() {
        if count == size {
            chunks.push(text[start..i].to_string());
            start = i;
            count = 0;
        }
        count += 1;
    }
    if start < text.len() {
        chunks.push(text[start..].to_string());
    }
    chunks
        .into_iter()
        .enumerate()
        .map(|(ordinal, text)| EvidenceChunk {
            doc_url: document.url.clone(),
            ordinal,
            text,
        })
        .collect()
}
