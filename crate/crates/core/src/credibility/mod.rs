//! Domain credibility ratings and the credibility / non-credibility rates.
//!
//! Ratings come from a user-supplied CSV (`domain,factuality,category,origin`).
//! Domains rated `NotRated` are excluded from rate denominators; their score of
//! zero only shows up in distribution data.

mod aggregate;
mod interval;
mod stats;

pub use aggregate::{aggregate, group, CellKey, CredibilityRow, Dimension, GroupBy, GroupError, WILDCARD};
pub use interval::{agresti_coull_ci, normal_quantile, z_for_confidence, IntervalError};
pub use stats::{citation_stats, factuality_distribution, CitationStats, Distribution};

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::Citation;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("failed to read rating database {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed rating database: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: unknown {field} {value:?}")]
    UnknownValue {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: empty domain")]
    EmptyDomain { line: u64 },
    #[error("{domain}: category {category} is incompatible with factuality {factuality}")]
    Inconsistent {
        domain: String,
        category: SourceCategory,
        factuality: FactualityLevel,
    },
    #[error("{0}: listed twice with the same origin")]
    Duplicate(String),
}

/// Collapses spelling variants ("Mostly Factual", "mostly_factual") to one key.
fn canonical(label: &str) -> String {
    label
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

macro_rules! labelled_enum {
    ($name:ident { $($variant:ident),+ $(,)? }) => {
        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant)),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let key = canonical(s);
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| canonical(v.as_str()) == key)
                    .ok_or_else(|| s.to_string())
            }
        }
    };
}

/// Factuality ratings, declared from most to least credible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FactualityLevel {
    VeryHigh,
    High,
    MostlyFactual,
    Mixed,
    Low,
    VeryLow,
    Satire,
    NotRated,
}

labelled_enum!(FactualityLevel {
    VeryHigh,
    High,
    MostlyFactual,
    Mixed,
    Low,
    VeryLow,
    Satire,
    NotRated,
});

impl FactualityLevel {
    /// Rank in the credibility order, highest first. `None` for `NotRated`.
    pub fn rank(self) -> Option<usize> {
        match self {
            FactualityLevel::NotRated => None,
            level => Some(level as usize),
        }
    }

    pub fn is_classified(self) -> bool {
        self != FactualityLevel::NotRated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceCategory {
    FactChecking,
    Government,
    SocialMedia,
    ResearchPublication,
    Disinformation,
    Other,
}

labelled_enum!(SourceCategory {
    FactChecking,
    Government,
    SocialMedia,
    ResearchPublication,
    Disinformation,
    Other,
});

impl SourceCategory {
    /// Factuality assumed for a curated entry that carries no rating of its own.
    pub fn default_factuality(self) -> FactualityLevel {
        match self {
            SourceCategory::FactChecking
            | SourceCategory::Government
            | SourceCategory::ResearchPublication => FactualityLevel::High,
            SourceCategory::SocialMedia => FactualityLevel::Mixed,
            SourceCategory::Disinformation => FactualityLevel::Low,
            SourceCategory::Other => FactualityLevel::NotRated,
        }
    }

    fn admits(self, factuality: FactualityLevel) -> bool {
        use FactualityLevel::*;
        match self {
            SourceCategory::Disinformation => matches!(factuality, Low | VeryLow | Satire),
            SourceCategory::FactChecking => matches!(factuality, High | VeryHigh),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RatingOrigin {
    #[serde(rename = "MBFC")]
    Mbfc,
    CuratedList,
    Unknown,
}

impl RatingOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            RatingOrigin::Mbfc => "MBFC",
            RatingOrigin::CuratedList => "CuratedList",
            RatingOrigin::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for RatingOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RatingOrigin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match canonical(s).as_str() {
            "mbfc" => Ok(RatingOrigin::Mbfc),
            "curatedlist" | "curated" => Ok(RatingOrigin::CuratedList),
            "unknown" => Ok(RatingOrigin::Unknown),
            _ => Err(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainRating {
    pub domain: String,
    pub factuality: FactualityLevel,
    pub category: SourceCategory,
    pub origin: RatingOrigin,
}

impl DomainRating {
    pub fn new(
        domain: impl Into<String>,
        factuality: FactualityLevel,
        category: SourceCategory,
        origin: RatingOrigin,
    ) -> Result<Self, RatingError> {
        let domain = domain.into();
        if !category.admits(factuality) {
            return Err(RatingError::Inconsistent {
                domain,
                category,
                factuality,
            });
        }
        Ok(Self {
            domain,
            factuality,
            category,
            origin,
        })
    }

    pub fn unrated(domain: impl Into<String>) -> Self {
        Self {
            domain: domain.into(),
            factuality: FactualityLevel::NotRated,
            category: SourceCategory::Other,
            origin: RatingOrigin::Unknown,
        }
    }

    pub fn score(&self) -> CredibilityScore {
        score(self.factuality)
    }
}

/// Numeric credibility of a rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CredibilityScore {
    MinusOne,
    MinusHalf,
    Zero,
    PlusHalf,
    One,
}

impl CredibilityScore {
    pub fn value(self) -> f64 {
        match self {
            CredibilityScore::MinusOne => -1.0,
            CredibilityScore::MinusHalf => -0.5,
            CredibilityScore::Zero => 0.0,
            CredibilityScore::PlusHalf => 0.5,
            CredibilityScore::One => 1.0,
        }
    }

    pub fn is_credible(self) -> bool {
        self.value() > 0.0
    }

    pub fn is_non_credible(self) -> bool {
        self.value() < 0.0
    }
}

pub fn score(level: FactualityLevel) -> CredibilityScore {
    use FactualityLevel::*;
    match level {
        Satire | VeryLow => CredibilityScore::MinusOne,
        Low => CredibilityScore::MinusHalf,
        Mixed | NotRated => CredibilityScore::Zero,
        MostlyFactual => CredibilityScore::PlusHalf,
        High | VeryHigh => CredibilityScore::One,
    }
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    domain: String,
    #[serde(default)]
    factuality: String,
    #[serde(default)]
    category: String,
    #[serde(default)]
    origin: String,
}

/// In-memory rating database keyed by lowercase host.
#[derive(Debug, Clone, Default)]
pub struct RatingDb {
    entries: HashMap<String, DomainRating>,
}

struct PendingRating {
    factuality: Option<FactualityLevel>,
    category: Option<SourceCategory>,
}

impl RatingDb {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads and merges rows. When a domain has both an MBFC row and a curated
    /// row, the curated category wins and the MBFC factuality wins.
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self, RatingError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: HashMap<String, HashMap<RatingOrigin, PendingRating>> = HashMap::new();
        let mut order = Vec::new();
        for (i, record) in rdr.deserialize::<RatingRow>().enumerate() {
            let row = record?;
            let line = i as u64 + 2;
            let domain = normalize_host(&row.domain);
            if domain.is_empty() {
                return Err(RatingError::EmptyDomain { line });
            }
            let factuality = (!row.factuality.is_empty())
                .then(|| row.factuality.parse::<FactualityLevel>())
                .transpose()
                .map_err(|value| RatingError::UnknownValue {
                    line,
                    field: "factuality",
                    value,
                })?;
            let category = (!row.category.is_empty())
                .then(|| row.category.parse::<SourceCategory>())
                .transpose()
                .map_err(|value| RatingError::UnknownValue {
                    line,
                    field: "category",
                    value,
                })?;
            let origin = if row.origin.is_empty() {
                RatingOrigin::Mbfc
            } else {
                row.origin.parse().map_err(|value| RatingError::UnknownValue {
                    line,
                    field: "origin",
                    value,
                })?
            };
            let by_origin = rows.entry(domain.clone()).or_insert_with(|| {
                order.push(domain.clone());
                HashMap::new()
            });
            if by_origin
                .insert(origin, PendingRating { factuality, category })
                .is_some()
            {
                return Err(RatingError::Duplicate(domain));
            }
        }

        let mut db = RatingDb::new();
        for domain in order {
            let by_origin = &rows[&domain];
            let mbfc = by_origin.get(&RatingOrigin::Mbfc);
            let curated = by_origin.get(&RatingOrigin::CuratedList);
            let other = by_origin.get(&RatingOrigin::Unknown);

            let category = curated
                .and_then(|r| r.category)
                .or_else(|| mbfc.and_then(|r| r.category))
                .or_else(|| other.and_then(|r| r.category))
                .unwrap_or(SourceCategory::Other);
            let factuality = mbfc
                .and_then(|r| r.factuality)
                .or_else(|| curated.and_then(|r| r.factuality))
                .or_else(|| other.and_then(|r| r.factuality))
                .unwrap_or_else(|| category.default_factuality());
            let origin = if mbfc.and_then(|r| r.factuality).is_some() {
                RatingOrigin::Mbfc
            } else if curated.is_some() {
                RatingOrigin::CuratedList
            } else if mbfc.is_some() {
                RatingOrigin::Mbfc
            } else {
                RatingOrigin::Unknown
            };
            db.insert(DomainRating::new(domain, factuality, category, origin)?);
        }
        Ok(db)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RatingError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| RatingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn insert(&mut self, mut rating: DomainRating) {
        rating.domain = normalize_host(&rating.domain);
        self.entries.insert(rating.domain.clone(), rating);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact host match, then the longest registered suffix, else unrated.
    pub fn lookup(&self, domain: &str) -> DomainRating {
        let host = normalize_host(domain);
        let mut candidate = host.as_str();
        loop {
            if let Some(rating) = self.entries.get(candidate) {
                return rating.clone();
            }
            match candidate.split_once('.') {
                Some((_, rest)) if !rest.is_empty() => candidate = rest,
                _ => return DomainRating::unrated(host),
            }
        }
    }
}

fn normalize_host(domain: &str) -> String {
    let host = domain.trim().trim_end_matches('.').to_ascii_lowercase();
    match host.strip_prefix("www.") {
        Some(rest) => rest.to_string(),
        None => host,
    }
}

pub fn lookup(domain: &str, db: &RatingDb) -> DomainRating {
    db.lookup(domain)
}

/// A rate with its Agresti–Coull interval. `rate` and the bounds are `None`
/// when no classified source backs the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub x: u64,
    pub n: u64,
    pub rate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl MetricResult {
    pub fn from_counts(x: u64, n: u64, confidence: f64) -> Result<Self, IntervalError> {
        if n == 0 {
            if x != 0 {
                return Err(IntervalError::CountExceedsSample { x, n });
            }
            return Ok(Self::undefined());
        }
        let (lo, hi) = agresti_coull_ci(x, n, confidence)?;
        let rate = x as f64 / n as f64;
        Ok(Self {
            x,
            n,
            rate: Some(rate),
            // the clamp can cut a hair inside the estimate through rounding
            ci_low: Some(lo.min(rate)),
            ci_high: Some(hi.max(rate)),
        })
    }

    pub fn undefined() -> Self {
        Self {
            x: 0,
            n: 0,
            rate: None,
            ci_low: None,
            ci_high: None,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.rate.is_some()
    }
}

/// Tally of cited sources by credibility score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreCounts {
    pub credible: u64,
    pub neutral: u64,
    pub non_credible: u64,
    pub not_rated: u64,
}

impl ScoreCounts {
    pub fn add(&mut self, rating: &DomainRating) {
        if !rating.factuality.is_classified() {
            self.not_rated += 1;
            return;
        }
        let s = rating.score();
        if s.is_credible() {
            self.credible += 1;
        } else if s.is_non_credible() {
            self.non_credible += 1;
        } else {
            self.neutral += 1;
        }
    }

    pub fn merge(&mut self, other: &ScoreCounts) {
        self.credible += other.credible;
        self.neutral += other.neutral;
        self.non_credible += other.non_credible;
        self.not_rated += other.not_rated;
    }

    pub fn classified(&self) -> u64 {
        self.credible + self.neutral + self.non_credible
    }

    pub fn of_citations(citations: &[Citation], db: &RatingDb) -> Self {
        let mut counts = Self::default();
        for citation in citations {
            counts.add(&db.lookup(&citation.domain));
        }
        counts
    }

    pub fn credibility_rate(&self, confidence: f64) -> Result<MetricResult, IntervalError> {
        MetricResult::from_counts(self.credible, self.classified(), confidence)
    }

    pub fn non_credibility_rate(&self, confidence: f64) -> Result<MetricResult, IntervalError> {
        MetricResult::from_counts(self.non_credible, self.classified(), confidence)
    }
}

/// Share of classified cited sources with a positive score.
pub fn credibility_rate(
    citations: &[Citation],
    db: &RatingDb,
    confidence: f64,
) -> Result<MetricResult, IntervalError> {
    ScoreCounts::of_citations(citations, db).credibility_rate(confidence)
}

/// Share of classified cited sources with a negative score.
pub fn non_credibility_rate(
    citations: &[Citation],
    db: &RatingDb,
    confidence: f64,
) -> Result<MetricResult, IntervalError> {
    ScoreCounts::of_citations(citations, db).non_credibility_rate(confidence)
}
