//! The `ingest`, `credibility`, `ground` and `report` commands and the files
//! they write.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    load_mock, BackendConfig, BackendError, Backends, HttpFetcher, OfflineFetcher, PageFetcher,
};
use crate::corpus::{load_claims, ClaimSet};
use crate::credibility::{
    aggregate, citation_stats, factuality_distribution, CellKey, FactualityLevel, GroupBy, MetricResult,
    RatingDb, DEFAULT_CONFIDENCE,
};
use crate::evidence::{DocumentCache, DocumentStatus, DEFAULT_CHUNK_CHARS, DEFAULT_TOP_K};
use crate::groundedness::{
    aggregate_grounding, ground_run, unclassified_share, GroundParams, GroundingError, Prompts,
    TranscriptGrounding, DEFAULT_ALPHA,
};
use crate::transcript::{
    builtin_profile, load_profiles, load_run, normalize, ProviderProfile, RawArchive, RefusalRules, Transcript,
};

pub const CREDIBILITY_CSV: &str = "credibility.csv";
pub const STATS_JSON: &str = "stats.json";
pub const DISTRIBUTION_CSV: &str = "distribution.csv";
pub const GROUNDEDNESS_CSV: &str = "groundedness.csv";
pub const HALLUCINATION_CSV: &str = "hallucination.csv";
pub const PER_RESPONSE_CSV: &str = "per_response.csv";
pub const VERDICTS_JSONL: &str = "verdicts.jsonl";
pub const GROUNDING_JSON: &str = "grounding.json";
pub const REPORT_JSON: &str = "report.json";
pub const SUMMARY_TXT: &str = "summary.txt";

/// Failure classes with stable exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<GroundingError> for CliError {
    fn from(e: GroundingError) -> Self {
        use crate::evidence::EvidenceError;
        match e {
            GroundingError::Backend(_) | GroundingError::Evidence(EvidenceError::Backend(_)) => {
                CliError::Backend(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Settings shared by every command. Relative paths resolve against the
/// working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Claim file; the bundled corpus when unset.
    pub corpus: Option<PathBuf>,
    pub raw: PathBuf,
    pub profiles: Option<PathBuf>,
    /// Profile for archives that do not name one.
    pub profile: String,
    pub transcripts: PathBuf,
    pub ratings: PathBuf,
    pub cache: PathBuf,
    pub output: PathBuf,
    /// Mock script; when set no model endpoint is contacted.
    pub mock: Option<PathBuf>,
    /// Serve documents from the cache only.
    pub offline: bool,
    pub prompts: Option<PathBuf>,
    /// Each entry is one grouping, e.g. "assistant,topic".
    pub group_by: Vec<String>,
    pub confidence: f64,
    pub k: usize,
    pub chunk_size: usize,
    pub alpha: f64,
    pub fetch_parallelism: usize,
    pub refusal_phrases: Option<Vec<String>>,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            raw: "raw".into(),
            profiles: None,
            profile: "plain".into(),
            transcripts: "transcripts".into(),
            ratings: "ratings.csv".into(),
            cache: "cache".into(),
            output: "out".into(),
            mock: None,
            offline: false,
            prompts: None,
            group_by: vec!["assistant,topic".into(), "assistant,user_type".into(), "assistant".into()],
            confidence: DEFAULT_CONFIDENCE,
            k: DEFAULT_TOP_K,
            chunk_size: DEFAULT_CHUNK_CHARS,
            alpha: DEFAULT_ALPHA,
            fetch_parallelism: 8,
            refusal_phrases: None,
            backend: BackendConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a JSON file (`.json`) or TOML `key = value` file (anything else).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return usage(format!("confidence must be in (0, 1), got {}", self.confidence));
        }
        if self.k == 0 {
            return usage("k must be at least 1".into());
        }
        if self.chunk_size == 0 {
            return usage("chunk_size must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return usage(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        self.groupings()?;
        Ok(())
    }

    pub fn groupings(&self) -> Result<Vec<GroupBy>, CliError> {
        self.group_by
            .iter()
            .map(|g| g.parse::<GroupBy>().map_err(|e| CliError::Usage(e.to_string())))
            .collect()
    }

    /// Resolves every relative path against `workdir`.
    pub fn rooted(mut self, workdir: &Path) -> Self {
        let root = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = workdir.join(&*p);
            }
        };
        for p in [
            &mut self.raw,
            &mut self.transcripts,
            &mut self.ratings,
            &mut self.cache,
            &mut self.output,
        ] {
            root(p);
        }
        for p in [&mut self.corpus, &mut self.profiles, &mut self.mock, &mut self.prompts]
            .into_iter()
            .flatten()
        {
            root(p);
        }
        self
    }

    fn corpus(&self) -> Result<ClaimSet, CliError> {
        match &self.corpus {
            Some(path) => load_claims(path).map_err(data),
            None => Ok(ClaimSet::shipped()),
        }
    }

    fn refusal_rules(&self) -> RefusalRules {
        match &self.refusal_phrases {
            Some(phrases) => RefusalRules {
                phrases: phrases.clone(),
            },
            None => RefusalRules::default(),
        }
    }
}

/// Writes via a temporary file and a rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let fail = |e: std::io::Error| data(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(fail)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(fail)?;
    std::fs::rename(&tmp, path).map_err(fail)
}

fn rate(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn metric_cols(m: &MetricResult) -> [String; 3] {
    [rate(m.rate), rate(m.ci_low), rate(m.ci_high)]
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(data)?;
    for row in rows {
        w.write_record(&row).map_err(data)?;
    }
    w.into_inner().map_err(data)
}

/// Loads the canonical run and fills missing topics from the claim corpus.
pub fn load_transcripts(config: &RunConfig) -> Result<Vec<Transcript>, CliError> {
    let mut run = load_run(&config.transcripts).map_err(data)?;
    if run.is_empty() {
        return Err(data(format!("no transcripts in {}", config.transcripts.display())));
    }
    let claims = config.corpus()?;
    for t in &mut run {
        if t.topic.is_none() {
            t.topic = claims.get(&t.claim_id).map(|c| c.topic);
        }
    }
    Ok(run)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestSummary {
    pub inputs: usize,
    pub written: usize,
    pub refused: usize,
    pub failures: Vec<(String, String)>,
}

impl IngestSummary {
    pub fn render(&self) -> String {
        let mut s = format!(
            "ingested {} of {} archives ({} refused, {} failed)\n",
            self.written,
            self.inputs,
            self.refused,
            self.failures.len()
        );
        for (file, err) in &self.failures {
            let _ = writeln!(s, "  failed {file}: {err}");
        }
        s
    }
}

fn resolve_profile(name: &str, custom: &[ProviderProfile]) -> Result<ProviderProfile, String> {
    custom
        .iter()
        .find(|p| p.name == name)
        .cloned()
        .or_else(|| builtin_profile(name))
        .ok_or_else(|| format!("unknown provider profile {name:?}"))
}

/// Normalizes every `*.json` archive in `config.raw` into `config.transcripts`.
/// Per-file failures are reported; the command fails only when no file succeeds.
pub fn cmd_ingest(config: &RunConfig) -> Result<IngestSummary, CliError> {
    let custom = match &config.profiles {
        Some(path) => load_profiles(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => Vec::new(),
    };
    resolve_profile(&config.profile, &custom).map_err(CliError::Usage)?;
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(&config.raw)
        .map_err(|e| data(format!("{}: {e}", config.raw.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    inputs.sort();
    if inputs.is_empty() {
        return Err(data(format!("no inputs in {}", config.raw.display())));
    }
    let claims = config.corpus()?;
    let rules = config.refusal_rules();
    let mut summary = IngestSummary {
        inputs: inputs.len(),
        ..IngestSummary::default()
    };
    let mut written: BTreeMap<String, String> = BTreeMap::new();
    for path in &inputs {
        let file = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let result = (|| -> Result<Transcript, String> {
            let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
            let raw: RawArchive = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            let profile = resolve_profile(raw.profile.as_deref().unwrap_or(&config.profile), &custom)?;
            let mut t = normalize(&raw, &profile, &rules).map_err(|e| e.to_string())?;
            if t.topic.is_none() {
                t.topic = claims.get(&t.claim_id).map(|c| c.topic);
            }
            Ok(t)
        })();
        match result {
            Ok(t) => {
                let name = t.file_name();
                if let Some(previous) = written.insert(name.clone(), file.clone()) {
                    summary
                        .failures
                        .push((file, format!("same conversation key as {previous}")));
                    continue;
                }
                write_atomic(&config.transcripts.join(&name), t.to_json().as_bytes())?;
                summary.written += 1;
                summary.refused += usize::from(t.refused);
            }
            Err(e) => {
                log::warn!("{file}: {e}");
                summary.failures.push((file, e));
            }
        }
    }
    if summary.written == 0 {
        return Err(data(format!("every input failed\n{}", summary.render())));
    }
    Ok(summary)
}

const CELL_COLUMNS: [&str; 4] = ["assistant", "topic", "user_type", "thinking_mode"];

fn header(fields: &[&'static str]) -> Vec<&'static str> {
    let mut h = vec!["group_by"];
    h.extend(CELL_COLUMNS);
    h.extend(fields);
    h
}

fn key_cols(group_by: &GroupBy, key: &CellKey) -> Vec<String> {
    let mut v = vec![if key.is_overall() { "overall".to_string() } else { group_by.to_string() }];
    v.extend(key.columns());
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CredibilitySummary {
    pub transcripts: usize,
    pub rows: usize,
    pub undefined_rows: usize,
}

/// Writes `credibility.csv`, `stats.json` and `distribution.csv`.
pub fn cmd_credibility(config: &RunConfig) -> Result<CredibilitySummary, CliError> {
    config.validate()?;
    let groupings = config.groupings()?;
    if !config.ratings.exists() {
        return Err(data(format!("rating database {} not found", config.ratings.display())));
    }
    let db = RatingDb::load(&config.ratings).map_err(data)?;
    let run = load_transcripts(config)?;

    let mut rows = Vec::new();
    let mut undefined = 0;
    let mut seen_overall = false;
    for g in &groupings {
        for row in aggregate(&run, g, &db, config.confidence).map_err(data)? {
            if row.key.is_overall() {
                if seen_overall {
                    continue;
                }
                seen_overall = true;
            }
            undefined += usize::from(row.is_undefined());
            let mut cols = key_cols(g, &row.key);
            cols.push(row.transcripts.to_string());
            cols.push(row.cr.n.to_string());
            cols.push(row.cr.x.to_string());
            cols.extend(metric_cols(&row.cr));
            cols.push(row.ncr.x.to_string());
            cols.extend(metric_cols(&row.ncr));
            cols.push(row.counts.not_rated.to_string());
            rows.push(cols);
        }
    }
    let n_rows = rows.len();
    let bytes = csv_bytes(
        &header(&[
            "transcripts", "n", "cr_x", "cr", "cr_lo", "cr_hi", "ncr_x", "ncr", "ncr_lo", "ncr_hi", "not_rated",
        ]),
        rows,
    )?;
    write_atomic(&config.output.join(CREDIBILITY_CSV), &bytes)?;

    let stats = citation_stats(&run, &db);
    let json = serde_json::to_string_pretty(&stats).map_err(data)? + "\n";
    write_atomic(&config.output.join(STATS_JSON), json.as_bytes())?;

    let mut dist_rows = Vec::new();
    for d in factuality_distribution(&run, &db) {
        for &level in FactualityLevel::ALL {
            dist_rows.push(vec![
                d.assistant.clone().unwrap_or_else(|| "*".into()),
                level.to_string(),
                d.count(level).to_string(),
                format!("{:.4}", d.share(level)),
            ]);
        }
    }
    let bytes = csv_bytes(&["assistant", "factuality", "count", "share"], dist_rows)?;
    write_atomic(&config.output.join(DISTRIBUTION_CSV), &bytes)?;

    Ok(CredibilitySummary {
        transcripts: run.len(),
        rows: n_rows,
        undefined_rows: undefined,
    })
}

fn backends(config: &RunConfig) -> Result<(Backends, Box<dyn PageFetcher>), CliError> {
    match &config.mock {
        Some(path) => Ok((Backends::mock(load_mock(path)?), Box::new(OfflineFetcher))),
        None => {
            let fetcher: Box<dyn PageFetcher> = if config.offline {
                Box::new(OfflineFetcher)
            } else {
                Box::new(HttpFetcher::default())
            };
            Ok((Backends::remote(config.backend.clone())?, fetcher))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSummary {
    pub transcripts: usize,
    pub refused: usize,
    pub failed: Vec<String>,
    pub documents: usize,
    pub documents_failed: usize,
    pub chunks_indexed: usize,
    pub units: usize,
    pub verifiable_units: usize,
    pub unclassified_share: Option<f64>,
    pub alpha: f64,
    pub k: usize,
    pub chunk_size: usize,
    pub prompt_hashes: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct AuditRecord<'a> {
    assistant_id: &'a str,
    claim_id: &'a str,
    role: &'a str,
    template_id: u8,
    thinking_mode: bool,
    label: String,
    unit_text: &'a str,
    #[serde(flatten)]
    verdict: &'a crate::groundedness::Verdict,
}

/// Writes `groundedness.csv`, `hallucination.csv`, `per_response.csv`,
/// `verdicts.jsonl` and `grounding.json`.
pub fn cmd_ground(config: &RunConfig) -> Result<GroundingSummary, CliError> {
    config.validate()?;
    let groupings = config.groupings()?;
    if !config.ratings.exists() {
        return Err(data(format!("rating database {} not found", config.ratings.display())));
    }
    let db = RatingDb::load(&config.ratings).map_err(data)?;
    let run = load_transcripts(config)?;
    let prompts = match &config.prompts {
        Some(dir) => Prompts::load(dir).map_err(|e| CliError::Usage(e.to_string()))?,
        None => Prompts::default(),
    };
    let (backends, fetcher) = backends(config)?;
    let cache = DocumentCache::open(&config.cache).map_err(data)?;
    let params = GroundParams {
        k: config.k,
        chunk_size: config.chunk_size,
        alpha: config.alpha,
        confidence: config.confidence,
        fetch_parallelism: config.fetch_parallelism,
        prompts: prompts.clone(),
    };
    let grounded = ground_run(&run, &db, &cache, fetcher.as_ref(), &backends, &params)?;

    let attempted: Vec<&TranscriptGrounding> = grounded
        .results
        .iter()
        .zip(&run)
        .filter(|(_, t)| !t.refused)
        .map(|(g, _)| g)
        .collect();
    if !attempted.is_empty() && attempted.iter().all(|g| g.backend_failure) {
        let first = attempted[0].error.clone().unwrap_or_default();
        return Err(CliError::Backend(format!("backend failed for every transcript: {first}")));
    }

    let scored: Vec<(&Transcript, &crate::groundedness::GroundednessReport)> = run
        .iter()
        .zip(&grounded.results)
        .filter_map(|(t, g)| g.report.as_ref().map(|r| (t, r)))
        .collect();

    let mut g_rows = Vec::new();
    let mut h_rows = Vec::new();
    let mut seen_overall = false;
    for g in &groupings {
        for row in aggregate_grounding(&scored, g, config.confidence).map_err(data)? {
            if row.key.is_overall() {
                if seen_overall {
                    continue;
                }
                seen_overall = true;
            }
            let mut cols = key_cols(g, &row.key);
            cols.push(row.responses.to_string());
            cols.push(row.verifiable.to_string());
            for m in [&row.gs, &row.cg, &row.ncg] {
                cols.push(m.x.to_string());
                cols.extend(metric_cols(m));
            }
            g_rows.push(cols);

            let mut cols = key_cols(g, &row.key);
            cols.push(row.responses.to_string());
            cols.push(row.hs_responses.to_string());
            cols.push(row.verifiable.to_string());
            cols.push(row.unsupported.to_string());
            cols.push(row.undecidable.to_string());
            cols.push(format!("{}", config.alpha));
            cols.push(rate(row.hs_mean));
            h_rows.push(cols);
        }
    }
    let bytes = csv_bytes(
        &header(&[
            "responses", "verifiable", "gs_x", "gs", "gs_lo", "gs_hi", "cg_x", "cg", "cg_lo", "cg_hi", "ncg_x", "ncg",
            "ncg_lo", "ncg_hi",
        ]),
        g_rows,
    )?;
    write_atomic(&config.output.join(GROUNDEDNESS_CSV), &bytes)?;
    let bytes = csv_bytes(
        &header(&["responses", "hs_responses", "verifiable", "unsupported", "undecidable", "alpha", "hs"]),
        h_rows,
    )?;
    write_atomic(&config.output.join(HALLUCINATION_CSV), &bytes)?;

    let mut per_rows = Vec::new();
    let mut audit = String::new();
    for (t, g) in run.iter().zip(&grounded.results) {
        let r = g.report.as_ref();
        let count = |f: fn(&crate::groundedness::GroundednessReport) -> usize| {
            r.map(|r| f(r).to_string()).unwrap_or_default()
        };
        per_rows.push(vec![
            t.assistant_id.clone(),
            t.claim_id.clone(),
            t.topic.map(|x| x.to_string()).unwrap_or_default(),
            t.role.to_string(),
            t.template_id.to_string(),
            t.thinking_mode.to_string(),
            t.refused.to_string(),
            count(|r| r.units),
            count(|r| r.verifiable),
            count(|r| r.supported),
            count(|r| r.supported_credible),
            count(|r| r.supported_non_credible),
            count(|r| r.unsupported),
            count(|r| r.undecidable),
            rate(r.and_then(|r| r.gs)),
            rate(r.and_then(|r| r.cg)),
            rate(r.and_then(|r| r.ncg)),
            rate(r.and_then(|r| r.hs)),
            rate(unclassified_share(&g.units)),
            g.error.clone().unwrap_or_default(),
        ]);
        for v in &g.verdicts {
            let unit = g.units.iter().find(|u| u.id == v.unit_id);
            let record = AuditRecord {
                assistant_id: &t.assistant_id,
                claim_id: &t.claim_id,
                role: t.role.as_str(),
                template_id: t.template_id,
                thinking_mode: t.thinking_mode,
                label: unit.map(|u| u.label.to_string()).unwrap_or_default(),
                unit_text: unit.map(|u| u.claim_text()).unwrap_or_default(),
                verdict: v,
            };
            audit.push_str(&serde_json::to_string(&record).map_err(data)?);
            audit.push('\n');
        }
    }
    let bytes = csv_bytes(
        &[
            "assistant", "claim_id", "topic", "user_type", "template_id", "thinking_mode", "refused", "units",
            "verifiable", "supported", "supported_credible", "supported_non_credible", "unsupported",
            "undecidable", "gs", "cg", "ncg", "hs", "unclassified_share", "error",
        ],
        per_rows,
    )?;
    write_atomic(&config.output.join(PER_RESPONSE_CSV), &bytes)?;
    write_atomic(&config.output.join(VERDICTS_JSONL), audit.as_bytes())?;

    let units: Vec<_> = grounded.results.iter().flat_map(|g| g.units.iter()).collect();
    let summary = GroundingSummary {
        transcripts: run.len(),
        refused: run.iter().filter(|t| t.refused).count(),
        failed: run
            .iter()
            .zip(&grounded.results)
            .filter(|(_, g)| g.error.is_some())
            .map(|(t, _)| t.file_name())
            .collect(),
        documents: grounded.documents.len(),
        documents_failed: grounded
            .documents
            .values()
            .filter(|d| d.status != DocumentStatus::Ok)
            .count(),
        chunks_indexed: grounded.chunks_indexed,
        units: units.len(),
        verifiable_units: units.iter().filter(|u| u.label.is_verifiable()).count(),
        unclassified_share: unclassified_share(units.iter().copied()),
        alpha: config.alpha,
        k: config.k,
        chunk_size: config.chunk_size,
        prompt_hashes: [&prompts.extract, &prompts.decontextualize, &prompts.judge]
            .into_iter()
            .map(|p| (p.name.clone(), p.sha256.clone()))
            .collect(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(data)? + "\n";
    write_atomic(&config.output.join(GROUNDING_JSON), json.as_bytes())?;
    Ok(summary)
}

type Record = BTreeMap<String, String>;

/// Reads a table written by this module into per-cell records keyed on the
/// four cell columns. Repeated cells must agree.
fn read_cells(path: &Path) -> Result<Option<BTreeMap<CellKey, Record>>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(data)?.clone();
    let mut cells: BTreeMap<CellKey, Record> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| data(format!("{}: {e}", path.display())))?;
        let get = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .and_then(|i| rec.get(i))
                .ok_or_else(|| data(format!("{}: missing column {name}", path.display())))
        };
        let key = CellKey::from_columns([get("assistant")?, get("topic")?, get("user_type")?, get("thinking_mode")?])
            .map_err(|e| data(format!("{}: {e}", path.display())))?;
        let values: Record = headers
            .iter()
            .zip(rec.iter())
            .filter(|(h, _)| *h != "group_by" && !CELL_COLUMNS.contains(h))
            .map(|(h, v)| (h.to_string(), v.to_string()))
            .collect();
        if let Some(existing) = cells.get(&key) {
            if *existing != values {
                return Err(data(format!(
                    "{}: conflicting rows for cell {key}",
                    path.file_name().unwrap_or_default().to_string_lossy()
                )));
            }
            continue;
        }
        cells.insert(key, values);
    }
    Ok(Some(cells))
}

fn typed(record: &Record) -> serde_json::Map<String, serde_json::Value> {
    record
        .iter()
        .map(|(k, v)| {
            let value = if v.is_empty() {
                serde_json::Value::Null
            } else if let Ok(i) = v.parse::<u64>() {
                i.into()
            } else if let Ok(f) = v.parse::<f64>() {
                serde_json::Number::from_f64(f).map(Into::into).unwrap_or(serde_json::Value::Null)
            } else {
                v.clone().into()
            };
            (k.clone(), value)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub key: CellKey,
    pub credibility: Option<serde_json::Map<String, serde_json::Value>>,
    pub groundedness: Option<serde_json::Map<String, serde_json::Value>>,
    pub hallucination: Option<serde_json::Map<String, serde_json::Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub cells: Vec<ReportCell>,
    pub stats: Option<serde_json::Value>,
    pub grounding: Option<serde_json::Value>,
}

fn read_json(path: &Path) -> Result<Option<serde_json::Value>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| data(format!("{}: {e}", path.display())))
}

fn field(m: &Option<serde_json::Map<String, serde_json::Value>>, name: &str) -> String {
    match m.as_ref().and_then(|m| m.get(name)) {
        Some(serde_json::Value::Number(n)) => n.as_f64().map(|f| format!("{:.1}", f * 100.0)).unwrap_or_default(),
        _ => "-".into(),
    }
}

impl Report {
    /// Plain-text table of the headline cells, percentages with one decimal.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<44} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
            "cell", "CR%", "NCR%", "GS%", "CG%", "NCG%", "HS"
        );
        for cell in &self.cells {
            let hs = match cell.hallucination.as_ref().and_then(|h| h.get("hs")) {
                Some(serde_json::Value::Number(n)) => format!("{:.3}", n.as_f64().unwrap_or(0.0)),
                _ => "-".into(),
            };
            let c = cell.key.columns();
            let label = if cell.key.is_overall() {
                "Overall".to_string()
            } else {
                format!("{} {} {} {}", c[0], c[1], c[2], c[3])
            };
            let _ = writeln!(
                s,
                "{:<44} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
                label,
                field(&cell.credibility, "cr"),
                field(&cell.credibility, "ncr"),
                field(&cell.groundedness, "gs"),
                field(&cell.groundedness, "cg"),
                field(&cell.groundedness, "ncg"),
                hs
            );
        }
        s
    }
}

/// Merges the credibility and groundedness tables in `config.output` into
/// `report.json` and `summary.txt`.
pub fn cmd_report(config: &RunConfig) -> Result<Report, CliError> {
    let dir = &config.output;
    let credibility = read_cells(&dir.join(CREDIBILITY_CSV))?;
    let groundedness = read_cells(&dir.join(GROUNDEDNESS_CSV))?;
    let hallucination = read_cells(&dir.join(HALLUCINATION_CSV))?;
    if credibility.is_none() && groundedness.is_none() {
        return Err(data(format!(
            "neither {CREDIBILITY_CSV} nor {GROUNDEDNESS_CSV} found in {}",
            dir.display()
        )));
    }
    let mut keys: Vec<CellKey> = Vec::new();
    for table in [&credibility, &groundedness, &hallucination].into_iter().flatten() {
        keys.extend(table.keys().cloned());
    }
    keys.sort();
    keys.dedup();
    // Overall last, as in the tables.
    keys.sort_by_key(|k| k.is_overall());
    let pick = |t: &Option<BTreeMap<CellKey, Record>>, k: &CellKey| t.as_ref().and_then(|t| t.get(k)).map(typed);
    let report = Report {
        cells: keys
            .into_iter()
            .map(|key| ReportCell {
                credibility: pick(&credibility, &key),
                groundedness: pick(&groundedness, &key),
                hallucination: pick(&hallucination, &key),
                key,
            })
            .collect(),
        stats: read_json(&dir.join(STATS_JSON))?,
        grounding: read_json(&dir.join(GROUNDING_JSON))?,
    };
    let json = serde_json::to_string_pretty(&report).map_err(data)? + "\n";
    write_atomic(&dir.join(REPORT_JSON), json.as_bytes())?;
    write_atomic(&dir.join(SUMMARY_TXT), report.summary().as_bytes())?;
    Ok(report)
}
