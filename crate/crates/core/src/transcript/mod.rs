//! Canonical transcripts: one assistant response, its citations, and the
//! association between response segments and cited sources.

mod profile;
mod segment;

pub use profile::{
    builtin_profile, load_profiles, normalize, AssociationStrategy, BodyFormat, Granularity,
    ProviderProfile, RawArchive, RawSource, Selectors,
};
pub use segment::{segment_text, split_spans, Marker, SpanRefs};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Role, Topic};

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("malformed URL {url:?}: {reason}")]
    MalformedUrl { url: String, reason: String },
    #[error("unparseable markup: {0}")]
    Markup(String),
    #[error("citation marker {0} references a missing source entry")]
    MissingSource(String),
    #[error("duplicate citation index {0}")]
    DuplicateCitation(u32),
    #[error("invalid transcript: {0}")]
    Invalid(String),
    #[error("invalid provider profile: {0}")]
    Profile(String),
    #[error("unknown provider profile {0:?}")]
    UnknownProfile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub index: u32,
    pub url: String,
    pub domain: String,
}

impl Citation {
    pub fn new(index: u32, url: &str) -> Result<Self, TranscriptError> {
        Ok(Self {
            index,
            url: url.trim().to_string(),
            domain: extract_domain(url)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// Exact slice of the response; concatenating all segments yields the response text.
    pub text: String,
    pub citation_refs: BTreeSet<u32>,
    /// True when the citations were attached to this segment in the markup.
    pub explicit: bool,
}

impl Segment {
    pub fn content(&self) -> &str {
        self.text.trim()
    }
}

/// Identifies one conversation within a run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TranscriptKey {
    pub assistant_id: String,
    pub claim_id: String,
    pub role: Role,
    pub template_id: u8,
    pub thinking_mode: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub assistant_id: String,
    pub claim_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<Topic>,
    pub role: Role,
    pub template_id: u8,
    pub response_text: String,
    pub segments: Vec<Segment>,
    pub citations: Vec<Citation>,
    pub refused: bool,
    pub thinking_mode: bool,
}

impl Transcript {
    pub fn key(&self) -> TranscriptKey {
        TranscriptKey {
            assistant_id: self.assistant_id.clone(),
            claim_id: self.claim_id.clone(),
            role: self.role,
            template_id: self.template_id,
            thinking_mode: self.thinking_mode,
        }
    }

    pub fn citation_indices(&self) -> BTreeSet<u32> {
        self.citations.iter().map(|c| c.index).collect()
    }

    pub fn citation(&self, index: u32) -> Option<&Citation> {
        self.citations.iter().find(|c| c.index == index)
    }

    /// Checks the structural invariants of a canonical transcript.
    pub fn validate(&self) -> Result<(), TranscriptError> {
        let mut seen = BTreeSet::new();
        for c in &self.citations {
            if !seen.insert(c.index) {
                return Err(TranscriptError::DuplicateCitation(c.index));
            }
            let domain = extract_domain(&c.url)?;
            if domain != c.domain {
                return Err(TranscriptError::Invalid(format!(
                    "citation {} domain {:?} does not match its url",
                    c.index, c.domain
                )));
            }
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if let Some(bad) = seg.citation_refs.iter().find(|r| !seen.contains(r)) {
                return Err(TranscriptError::MissingSource(format!("{bad} (segment {i})")));
            }
            if !seg.explicit && seg.citation_refs != seen {
                return Err(TranscriptError::Invalid(format!(
                    "implicit segment {i} must reference every citation"
                )));
            }
        }
        let joined: String = self.segments.iter().map(|s| s.text.as_str()).collect();
        if joined != self.response_text {
            return Err(TranscriptError::Invalid(
                "segments do not reconstruct the response text".into(),
            ));
        }
        if !(1..=3).contains(&self.template_id) {
            return Err(TranscriptError::Invalid(format!(
                "template id {} outside 1..=3",
                self.template_id
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    /// File name used inside a run directory.
    pub fn file_name(&self) -> String {
        let clean = |s: &str| -> String {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect()
        };
        format!(
            "{}__{}__{}-{}{}.json",
            clean(&self.assistant_id),
            clean(&self.claim_id),
            match self.role {
                Role::FactChecker => "FC",
                Role::ClaimBeliever => "CB",
            },
            self.template_id,
            if self.thinking_mode { "__thinking" } else { "" }
        )
    }
}

/// Segment index to the set of citation indices that support it.
pub type CitationSpanMap = BTreeMap<usize, BTreeSet<u32>>;

/// Segments without in-markup citations map to every citation of the transcript.
pub fn map_citations(transcript: &Transcript) -> CitationSpanMap {
    let all = transcript.citation_indices();
    transcript
        .segments
        .iter()
        .enumerate()
        .map(|(i, seg)| {
            let refs = if seg.explicit {
                seg.citation_refs.clone()
            } else {
                all.clone()
            };
            (i, refs)
        })
        .collect()
}

/// Phrases that mark a refusal when the response cites nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefusalRules {
    pub phrases: Vec<String>,
}

impl Default for RefusalRules {
    fn default() -> Self {
        let phrases = [
            "i can't help with",
            "i cannot help with",
            "i can't assist with",
            "i cannot assist with",
            "i'm unable to help",
            "i am unable to help",
            "i'm not able to help",
            "i can't provide information",
            "i cannot provide information",
            "i'm sorry, but i can't",
            "i'm sorry, but i cannot",
            "i won't be able to help",
            "unable to answer this question",
        ];
        Self {
            phrases: phrases.into_iter().map(String::from).collect(),
        }
    }
}

impl RefusalRules {
    pub fn matches(&self, text: &str) -> bool {
        let lower = text.to_lowercase().replace('\u{2019}', "'");
        self.phrases.iter().any(|p| lower.contains(&p.to_lowercase()))
    }
}

/// Empty body, or a refusal phrase in a response with zero citations.
pub fn detect_refusal(transcript: &Transcript, rules: &RefusalRules) -> bool {
    let body = transcript.response_text.trim();
    body.is_empty() || (transcript.citations.is_empty() && rules.matches(body))
}

/// Lowercase host of an absolute URL with any leading `www.` removed.
pub fn extract_domain(url: &str) -> Result<String, TranscriptError> {
    let malformed = |reason: String| TranscriptError::MalformedUrl {
        url: url.to_string(),
        reason,
    };
    let parsed = url::Url::parse(url.trim()).map_err(|e| malformed(e.to_string()))?;
    let host = parsed
        .host_str()
        .filter(|h| !h.is_empty())
        .ok_or_else(|| malformed("no host".into()))?;
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    Ok(host.strip_prefix("www.").map(str::to_string).unwrap_or(host))
}

/// Loads every `*.json` transcript in a directory, sorted by key.
pub fn load_run(dir: impl AsRef<Path>) -> Result<Vec<Transcript>, TranscriptError> {
    let dir = dir.as_ref();
    let io = |source| TranscriptError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut run = Vec::with_capacity(paths.len());
    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(|source| TranscriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let transcript = Transcript::from_json(&text).map_err(|source| TranscriptError::Json {
            path: path.display().to_string(),
            source,
        })?;
        transcript.validate().map_err(|e| {
            TranscriptError::Invalid(format!("{}: {e}", path.display()))
        })?;
        run.push(transcript);
    }
    run.sort_by_key(Transcript::key);
    Ok(run)
}
