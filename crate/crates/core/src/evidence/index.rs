use std::cmp::Ordering;

use super::{EvidenceChunk, EvidenceError};
use crate::backend::{check_dimensions, Embedder};

/// Exact cosine-similarity index over L2-normalized chunk vectors.
#[derive(Debug, Clone, Default)]
pub struct EvidenceIndex {
    chunks: Vec<EvidenceChunk>,
    vectors: Vec<Vec<f32>>,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedChunk {
    pub chunk: EvidenceChunk,
    pub similarity: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub hits: Vec<RetrievedChunk>,
    pub k: usize,
    /// Set when there was nothing to search.
    pub empty_index: bool,
}

impl RetrievalResult {
    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

fn normalize(mut v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x = (*x as f64 / norm) as f32;
        }
    }
    v
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    s.clamp(-1.0, 1.0) as f32
}

/// Embeds every chunk once, in a single `embed_batch` call.
pub fn build_index(chunks: Vec<EvidenceChunk>, embedder: &dyn Embedder) -> Result<EvidenceIndex, EvidenceError> {
    if let Some(c) = chunks.iter().find(|c| c.text.is_empty()) {
        return Err(EvidenceError::EmptyChunk {
            doc_url: c.doc_url.clone(),
            ordinal: c.ordinal,
        });
    }
    if chunks.is_empty() {
        return Ok(EvidenceIndex::default());
    }
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let vectors = embedder.embed_batch(&texts)?;
    if vectors.len() != chunks.len() {
        return Err(EvidenceError::VectorCount {
            expected: chunks.len(),
            got: vectors.len(),
        });
    }
    let dim = check_dimensions(&vectors, 0)?;
    Ok(EvidenceIndex {
        chunks,
        vectors: vectors.into_iter().map(normalize).collect(),
        dim,
    })
}

impl EvidenceIndex {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chunks(&self) -> &[EvidenceChunk] {
        &self.chunks
    }

    /// Normalized vector of chunk `i`.
    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i]
    }

    /// Top `k` by similarity to `query`; ties go to the smaller
    /// `(doc_url, ordinal)`.
    pub fn search(&self, query: &[f32], k: usize) -> Result<RetrievalResult, EvidenceError> {
        self.search_where(query, k, |_| true)
    }

    /// As [`EvidenceIndex::search`], over the chunks `keep` accepts. No
    /// accepted chunk gives an empty result rather than an error.
    pub fn search_where(
        &self,
        query: &[f32],
        k: usize,
        keep: impl Fn(&EvidenceChunk) -> bool,
    ) -> Result<RetrievalResult, EvidenceError> {
        if k == 0 {
            return Err(EvidenceError::ZeroK);
        }
        if !self.chunks.iter().any(&keep) {
            return Ok(RetrievalResult {
                hits: Vec::new(),
                k,
                empty_index: true,
            });
        }
        if query.len() != self.dim {
            return Err(EvidenceError::QueryDimension {
                expected: self.dim,
                got: query.len(),
            });
        }
        let q = normalize(query.to_vec());
        let mut scored: Vec<(usize, f32)> = self
            .vectors
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(&self.chunks[*i]))
            .map(|(i, v)| (i, dot(&q, v)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| {
                let (ca, cb) = (&self.chunks[a.0], &self.chunks[b.0]);
                (&ca.doc_url, ca.ordinal).cmp(&(&cb.doc_url, cb.ordinal))
            })
        });
        scored.truncate(k);
        Ok(RetrievalResult {
            hits: scored
                .into_iter()
                .map(|(i, similarity)| RetrievedChunk {
                    chunk: self.chunks[i].clone(),
                    similarity,
                })
                .collect(),
            k,
            empty_index: false,
        })
    }

    /// Embeds `query` and searches. An empty index answers without calling
    /// the embedder.
    pub fn retrieve(&self, query: &str, embedder: &dyn Embedder, k: usize) -> Result<RetrievalResult, EvidenceError> {
        if k == 0 {
            return Err(EvidenceError::ZeroK);
        }
        if self.is_empty() {
            return self.search(&[], k);
        }
        let mut vectors = embedder.embed_batch(&[query.to_string()])?;
        if vectors.len() != 1 {
            return Err(EvidenceError::VectorCount {
                expected: 1,
                got: vectors.len(),
            });
        }
        self.search(&vectors.remove(0), k)
    }
}
