use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{IntervalError, MetricResult, RatingDb, ScoreCounts};
use crate::transcript::Transcript;

#[derive(Debug, Error)]
pub enum GroupError {
    #[error("unknown group key {0:?} (expected assistant, topic, user_type or thinking_mode)")]
    UnknownDimension(String),
    #[error("transcript {assistant}/{claim} has no topic")]
    MissingTopic { assistant: String, claim: String },
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// A metadata field rows can be grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Assistant,
    Topic,
    UserType,
    ThinkingMode,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Assistant,
        Dimension::Topic,
        Dimension::UserType,
        Dimension::ThinkingMode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Assistant => "assistant",
            Dimension::Topic => "topic",
            Dimension::UserType => "user_type",
            Dimension::ThinkingMode => "thinking_mode",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == key)
            .ok_or_else(|| GroupError::UnknownDimension(s.to_string()))
    }
}

/// A set of dimensions, kept sorted and free of duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupBy(Vec<Dimension>);

impl GroupBy {
    pub fn new(dims: impl IntoIterator<Item = Dimension>) -> Self {
        let mut v: Vec<_> = dims.into_iter().collect();
        v.sort();
        v.dedup();
        Self(v)
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.0
    }

    pub fn contains(&self, d: Dimension) -> bool {
        self.0.contains(&d)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromStr for GroupBy {
    type Err = GroupError;

    /// Comma-separated dimension names; empty or "none" means no grouping.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("overall") {
            return Ok(Self::none());
        }
        s.split(',')
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()
            .map(Self::new)
    }
}

impl fmt::Display for GroupBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("overall");
        }
        let names: Vec<_> = self.0.iter().map(|d| d.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

/// Identifies a table cell. `None` fields are not grouped on; the Overall
/// cell has every field `None`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub assistant: Option<String>,
    pub topic: Option<String>,
    pub user_type: Option<String>,
    pub thinking_mode: Option<bool>,
}

pub const WILDCARD: &str = "*";

impl CellKey {
    pub fn overall() -> Self {
        Self::default()
    }

    pub fn is_overall(&self) -> bool {
        *self == Self::default()
    }

    pub fn of(transcript: &Transcript, group_by: &GroupBy) -> Result<Self, GroupError> {
        let mut key = Self::default();
        for dim in group_by.dims() {
            match dim {
                Dimension::Assistant => key.assistant = Some(transcript.assistant_id.clone()),
                Dimension::Topic => {
                    let topic = transcript.topic.ok_or_else(|| GroupError::MissingTopic {
                        assistant: transcript.assistant_id.clone(),
                        claim: transcript.claim_id.clone(),
                    })?;
                    key.topic = Some(topic.as_str().to_string())
                }
                Dimension::UserType => key.user_type = Some(transcript.role.as_str().to_string()),
                Dimension::ThinkingMode => key.thinking_mode = Some(transcript.thinking_mode),
            }
        }
        Ok(key)
    }

    /// Column values in the order assistant, topic, user_type, thinking_mode.
    pub fn columns(&self) -> [String; 4] {
        let s = |v: &Option<String>| v.clone().unwrap_or_else(|| WILDCARD.into());
        [
            s(&self.assistant),
            s(&self.topic),
            s(&self.user_type),
            self.thinking_mode
                .map(|b| b.to_string())
                .unwrap_or_else(|| WILDCARD.into()),
        ]
    }

    /// Inverse of [`CellKey::columns`].
    pub fn from_columns(cols: [&str; 4]) -> Result<Self, String> {
        let s = |v: &str| (v != WILDCARD).then(|| v.to_string());
        let thinking_mode = match cols[3] {
            WILDCARD => None,
            "true" => Some(true),
            "false" => Some(false),
            other => return Err(format!("thinking_mode {other:?} is not true, false or *")),
        };
        Ok(Self {
            assistant: s(cols[0]),
            topic: s(cols[1]),
            user_type: s(cols[2]),
            thinking_mode,
        })
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_overall() {
            return f.write_str("Overall");
        }
        let c = self.columns();
        write!(f, "assistant={} topic={} user_type={} thinking_mode={}", c[0], c[1], c[2], c[3])
    }
}

/// Groups transcripts by cell in key order.
pub fn group<'a>(run: &'a [Transcript], group_by: &GroupBy) -> Result<BTreeMap<CellKey, Vec<&'a Transcript>>, GroupError> {
    let mut cells: BTreeMap<CellKey, Vec<&Transcript>> = BTreeMap::new();
    for t in run {
        cells.entry(CellKey::of(t, group_by)?).or_default().push(t);
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibilityRow {
    pub key: CellKey,
    pub transcripts: usize,
    pub counts: ScoreCounts,
    pub cr: MetricResult,
    pub ncr: MetricResult,
}

impl CredibilityRow {
    /// True when no classified source backs the row.
    pub fn is_undefined(&self) -> bool {
        !self.cr.is_defined()
    }
}

fn row(key: CellKey, transcripts: &[&Transcript], db: &RatingDb, confidence: f64) -> Result<CredibilityRow, GroupError> {
    let mut counts = ScoreCounts::default();
    for t in transcripts {
        counts.merge(&ScoreCounts::of_citations(&t.citations, db));
    }
    Ok(CredibilityRow {
        key,
        transcripts: transcripts.len(),
        cr: counts.credibility_rate(confidence)?,
        ncr: counts.non_credibility_rate(confidence)?,
        counts,
    })
}

/// CR and NCR per cell, pooled over every citation in the cell, followed by
/// the Overall row. With no grouping only the Overall row is produced.
pub fn aggregate(
    run: &[Transcript],
    group_by: &GroupBy,
    db: &RatingDb,
    confidence: f64,
) -> Result<Vec<CredibilityRow>, GroupError> {
    let mut rows = Vec::new();
    if !group_by.is_empty() {
        for (key, members) in group(run, group_by)? {
            rows.push(row(key, &members, db, confidence)?);
        }
    }
    let all: Vec<&Transcript> = run.iter().collect();
    rows.push(row(CellKey::overall(), &all, db, confidence)?);
    Ok(rows)
}
