//! Scripted offline backend.
//!
//! A mock script is JSON:
//!
//! ```json
//! {
//!   "embedding": {"mode": "hashed_bag_of_words", "dim": 256},
//!   "completions": [
//!     {"task": "judge", "contains": ["Unit: ...", "[doc:a1]"], "response": "..."},
//!     {"prompt_sha256": "…", "responses": ["first call", "later calls"]}
//!   ],
//!   "default_response": null
//! }
//! ```
//!
//! Rules are tried in order; the first whose `task`, `contains` and
//! `prompt_sha256` conditions all hold answers. A rule with `responses`
//! returns them in sequence and then repeats the last one.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_dimensions, BackendError, ChatBackend, ChatRequest, Embedder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EmbeddingMode {
    HashedBagOfWords {
        dim: usize,
    },
    Scripted {
        vectors: HashMap<String, Vec<f32>>,
    },
}

impl Default for EmbeddingMode {
    fn default() -> Self {
        EmbeddingMode::HashedBagOfWords { dim: 256 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub prompt_sha256: Option<String>,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub responses: Vec<String>,
}

impl MockRule {
    fn matches(&self, request: &ChatRequest, digest: &str) -> bool {
        self.task.as_ref().is_none_or(|t| request.task.as_deref() == Some(t.as_str()))
            && self.contains.iter().all(|c| request.prompt.contains(c.as_str()))
            && self
                .prompt_sha256
                .as_ref()
                .is_none_or(|h| h.eq_ignore_ascii_case(digest))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub embedding: EmbeddingMode,
    #[serde(default)]
    pub completions: Vec<MockRule>,
    #[serde(default)]
    pub default_response: Option<String>,
}

impl MockScript {
    pub fn validate(&self) -> Result<(), BackendError> {
        if let EmbeddingMode::HashedBagOfWords { dim } = self.embedding {
            if dim == 0 {
                return Err(BackendError::Mock("hashed embedding dimension must be positive".into()));
            }
        }
        for (i, rule) in self.completions.iter().enumerate() {
            if rule.response.is_none() && rule.responses.is_empty() {
                return Err(BackendError::Mock(format!("rule {i} has no response")));
            }
        }
        Ok(())
    }
}

pub struct MockBackend {
    script: MockScript,
    rule_calls: Mutex<Vec<usize>>,
    chat_calls: AtomicUsize,
    embed_calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Result<Self, BackendError> {
        script.validate()?;
        Ok(Self {
            rule_calls: Mutex::new(vec![0; script.completions.len()]),
            script,
            chat_calls: AtomicUsize::new(0),
            embed_calls: AtomicUsize::new(0),
        })
    }

    /// A mock whose every completion is `response`.
    pub fn constant(response: &str) -> Self {
        Self::new(MockScript {
            default_response: Some(response.into()),
            ..MockScript::default()
        })
        .expect("valid script")
    }

    pub fn chat_calls(&self) -> usize {
        self.chat_calls.load(Ordering::SeqCst)
    }

    pub fn embed_calls(&self) -> usize {
        self.embed_calls.load(Ordering::SeqCst)
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

pub fn load_mock(path: impl AsRef<Path>) -> Result<MockBackend, BackendError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| BackendError::Mock(format!("{}: {e}", path.display())))?;
    let script: MockScript = serde_json::from_str(&text)
        .map_err(|e| BackendError::Mock(format!("{}: {e}", path.display())))?;
    MockBackend::new(script)
}

impl ChatBackend for MockBackend {
    fn chat_complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.chat_calls.fetch_add(1, Ordering::SeqCst);
        let digest = hex::encode(Sha256::digest(request.prompt.as_bytes()));
        for (i, rule) in self.script.completions.iter().enumerate() {
            if !rule.matches(request, &digest) {
                continue;
            }
            if rule.responses.is_empty() {
                return Ok(rule.response.clone().expect("validated"));
            }
            let mut calls = self.rule_calls.lock().unwrap();
            let n = calls[i];
            calls[i] += 1;
            return Ok(rule.responses[n.min(rule.responses.len() - 1)].clone());
        }
        self.script.default_response.clone().ok_or_else(|| {
            let head: String = request.prompt.chars().take(120).collect();
            BackendError::Mock(format!(
                "no rule matches {} prompt (sha256 {digest}): {head:?}",
                request.task.as_deref().unwrap_or("untagged")
            ))
        })
    }
}

impl Embedder for MockBackend {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        self.embed_calls.fetch_add(1, Ordering::SeqCst);
        let vectors = match &self.script.embedding {
            EmbeddingMode::HashedBagOfWords { dim } => {
                texts.iter().map(|t| hashed_embedding(t, *dim)).collect::<Vec<_>>()
            }
            EmbeddingMode::Scripted { vectors } => texts
                .iter()
                .map(|t| {
                    vectors
                        .get(t)
                        .cloned()
                        .ok_or_else(|| BackendError::Mock(format!("no scripted vector for {t:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        check_dimensions(&vectors, 0)?;
        Ok(vectors)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Final avalanche step. Without it tokens that differ only in their last
/// byte share low bits and land in correlated buckets.
fn fmix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

/// Signed feature hashing of lowercase word tokens. Deterministic across
/// processes and platforms.
pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f32> {
    let mut v = vec![0.0f32; dim];
    let lower = text.to_lowercase();
    for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let h = fmix64(fnv1a(token.as_bytes()));
        let bucket = (h % dim as u64) as usize;
        v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(json: &str) -> MockBackend {
        MockBackend::new(serde_json::from_str(json).unwrap()).unwrap()
    }

    #[test]
    fn scripted_rules_answer_in_order() {
        let mock = script(
            r#"{"completions": [
                {"task": "judge", "contains": ["alpha"], "response": "A"},
                {"contains": ["alpha"], "response": "B"},
                {"contains": ["seq"], "responses": ["one", "two"]}
            ]}"#,
        );
        let judge = ChatRequest::new("alpha beta").with_task("judge");
        assert_eq!(mock.chat_complete(&judge).unwrap(), "A");
        assert_eq!(mock.chat_complete(&ChatRequest::new("alpha")).unwrap(), "B");
        let seq = ChatRequest::new("seq");
        assert_eq!(mock.chat_complete(&seq).unwrap(), "one");
        assert_eq!(mock.chat_complete(&seq).unwrap(), "two");
        assert_eq!(mock.chat_complete(&seq).unwrap(), "two");
        assert!(matches!(mock.chat_complete(&ChatRequest::new("zzz")), Err(BackendError::Mock(_))));
        assert_eq!(mock.chat_calls(), 6);
    }

    #[test]
    fn rules_can_key_on_prompt_hash() {
        let digest = hex::encode(Sha256::digest(b"exact prompt"));
        let mock = script(&format!(
            r#"{{"completions": [{{"prompt_sha256": "{digest}", "response": "hit"}}]}}"#
        ));
        assert_eq!(mock.chat_complete(&ChatRequest::new("exact prompt")).unwrap(), "hit");
        assert!(mock.chat_complete(&ChatRequest::new("exact prompt ")).is_err());
    }

    #[test]
    fn hashed_embeddings_are_deterministic() {
        let a = hashed_embedding("abc", 256);
        assert_eq!(a, hashed_embedding("abc", 256));
        assert_eq!(a.iter().map(|x| x.abs()).sum::<f32>(), 1.0);
        // frozen: fnv1a("abc") = 0xe71fa2190541574b
        assert_eq!(fnv1a(b"abc"), 0xe71f_a219_0541_574b);
        // frozen: fmix64 of that is 0x33ebaf9927cbc5bd, bucket 189, positive sign
        assert_eq!(fmix64(0xe71f_a219_0541_574b), 0x33eb_af99_27cb_c5bd);
        assert_eq!(a[189], 1.0);
        assert_eq!(hashed_embedding("Vaccines, vaccines!", 64), hashed_embedding("vaccines vaccines", 64));
    }

    #[test]
    fn scripted_vectors_and_dimension_checks() {
        let mock = script(r#"{"embedding": {"mode": "scripted", "vectors": {"a": [1, 0], "b": [0, 1, 0]}}}"#);
        assert_eq!(mock.embed_batch(&["a".into()]).unwrap(), vec![vec![1.0, 0.0]]);
        assert!(matches!(
            mock.embed_batch(&["a".into(), "b".into()]),
            Err(BackendError::DimensionMismatch { .. })
        ));
        assert!(mock.embed_batch(&["missing".into()]).is_err());
    }

    #[test]
    fn invalid_scripts_are_rejected() {
        let bad: Result<MockScript, _> = serde_json::from_str(r#"{"embedding": {"mode": "word2vec"}}"#);
        assert!(bad.is_err());
        let no_response: MockScript = serde_json::from_str(r#"{"completions": [{"contains": ["x"]}]}"#).unwrap();
        assert!(MockBackend::new(no_response).is_err());
        assert!(load_mock("/nonexistent/mock.json").is_err());
    }
}
