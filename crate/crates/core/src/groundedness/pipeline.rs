use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    decontextualize, extract_units, judge, partition_sources, scores, GroundednessReport, GroundingError,
    Prompts, SourceGroupKind, Unit, Verdict, DEFAULT_ALPHA,
};
use crate::backend::{Backends, PageFetcher};
use crate::credibility::{RatingDb, DEFAULT_CONFIDENCE};
use crate::evidence::{
    build_index, chunk, fetch_all, Document, DocumentCache, EvidenceIndex, RetrievalResult, DEFAULT_CHUNK_CHARS,
    DEFAULT_TOP_K,
};
use crate::transcript::{Transcript, TranscriptKey};

#[derive(Debug, Clone)]
pub struct GroundParams {
    pub k: usize,
    pub chunk_size: usize,
    pub alpha: f64,
    pub confidence: f64,
    /// Hosts fetched concurrently.
    pub fetch_parallelism: usize,
    pub prompts: Prompts,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            chunk_size: DEFAULT_CHUNK_CHARS,
            alpha: DEFAULT_ALPHA,
            confidence: DEFAULT_CONFIDENCE,
            fetch_parallelism: 8,
            prompts: Prompts::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptGrounding {
    pub key: TranscriptKey,
    pub units: Vec<Unit>,
    pub verdicts: Vec<Verdict>,
    /// `None` when grounding this transcript failed.
    pub report: Option<GroundednessReport>,
    pub error: Option<String>,
    /// The failure came from the model backend rather than from the data.
    pub backend_failure: bool,
}

#[derive(Debug, Clone)]
pub struct GroundRun {
    /// In the order of the input run.
    pub results: Vec<TranscriptGrounding>,
    pub documents: BTreeMap<String, Document>,
    pub chunks_indexed: usize,
}

/// Fetches every cited document, indexes all chunks once, then grounds each
/// transcript. Failures inside one transcript are recorded on its result;
/// fetch, cache and index-build failures abort the run.
pub fn ground_run(
    run: &[Transcript],
    db: &RatingDb,
    cache: &DocumentCache,
    fetcher: &dyn PageFetcher,
    backends: &Backends,
    params: &GroundParams,
) -> Result<GroundRun, GroundingError> {
    let urls: Vec<String> = run
        .iter()
        .filter(|t| !t.refused)
        .flat_map(|t| t.citations.iter().map(|c| c.url.clone()))
        .collect();
    let documents = fetch_all(&urls, cache, fetcher, params.fetch_parallelism)?;
    let chunks: Vec<_> = documents.values().flat_map(|d| chunk(d, params.chunk_size)).collect();
    let index = build_index(chunks, backends.embedder.as_ref())?;
    log::info!("indexed {} chunks from {} documents", index.len(), documents.len());
    let results = run
        .par_iter()
        .map(|t| {
            let key = t.key();
            match ground_transcript(t, db, &index, backends, params) {
                Ok((units, verdicts)) => TranscriptGrounding {
                    key,
                    report: Some(scores(&units, &verdicts, params.alpha)),
                    units,
                    verdicts,
                    error: None,
                    backend_failure: false,
                },
                Err(e) => {
                    log::warn!("{}/{}: {e}", t.assistant_id, t.file_name());
                    TranscriptGrounding {
                        key,
                        units: Vec::new(),
                        verdicts: Vec::new(),
                        report: None,
                        backend_failure: matches!(e, GroundingError::Backend(_)),
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    Ok(GroundRun {
        results,
        chunks_indexed: index.len(),
        documents,
    })
}

fn ground_transcript(
    t: &Transcript,
    db: &RatingDb,
    index: &EvidenceIndex,
    backends: &Backends,
    params: &GroundParams,
) -> Result<(Vec<Unit>, Vec<Verdict>), GroundingError> {
    if t.refused {
        return Ok((Vec::new(), Vec::new()));
    }
    let chat = backends.chat.as_ref();
    let mut units = Vec::new();
    for (i, segment) in t.segments.iter().enumerate() {
        if segment.content().is_empty() {
            continue;
        }
        for unit in extract_units(segment.content(), i, &t.response_text, chat, &params.prompts)? {
            units.push(if unit.label.is_verifiable() {
                decontextualize(&unit, &t.response_text, chat, &params.prompts)?
            } else {
                unit
            });
        }
    }

    let group_of: HashMap<u32, SourceGroupKind> = partition_sources(t, db)
        .into_iter()
        .flat_map(|g| g.citations.into_iter().map(move |c| (c.index, g.kind)))
        .collect();
    let verifiable: Vec<&Unit> = units.iter().filter(|u| u.label.is_verifiable()).collect();
    let queries = if index.is_empty() || verifiable.is_empty() {
        Vec::new()
    } else {
        let texts: Vec<String> = verifiable.iter().map(|u| u.claim_text().to_string()).collect();
        backends.embedder.embed_batch(&texts)?
    };

    let mut verdicts = Vec::new();
    for (n, unit) in verifiable.iter().enumerate() {
        let refs = &t.segments[unit.source_segment].citation_refs;
        for kind in SourceGroupKind::ALL {
            let urls: BTreeSet<&str> = refs
                .iter()
                .filter(|r| group_of.get(r) == Some(&kind))
                .filter_map(|r| t.citation(*r))
                .map(|c| c.url.as_str())
                .collect();
            if urls.is_empty() {
                continue;
            }
            let evidence = match queries.get(n) {
                Some(q) => index.search_where(q, params.k, |c| urls.contains(c.doc_url.as_str()))?,
                None => RetrievalResult {
                    hits: Vec::new(),
                    k: params.k,
                    empty_index: true,
                },
            };
            verdicts.push(judge(unit, kind, &evidence, chat, &params.prompts)?);
        }
    }
    Ok((units, verdicts))
}
