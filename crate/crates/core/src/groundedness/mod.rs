//! Unit extraction, decontextualization, per-source-group judging, and the
//! groundedness scores built on the verdicts.

mod pipeline;
mod score;

pub use pipeline::{ground_run, GroundParams, GroundRun, TranscriptGrounding};
pub use score::{
    aggregate_grounding, rollup, scores, unclassified_share, GroundednessReport, GroundingRow, Rollup,
    DEFAULT_ALPHA,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatRequest};
use crate::credibility::RatingDb;
use crate::evidence::{EvidenceError, RetrievalResult};
use crate::transcript::{Citation, Transcript};

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error("{task} reply could not be parsed after a reprompt: {reply:?}")]
    Malformed { task: &'static str, reply: String },
    #[error("unit {unit} is labelled {label} and cannot be decontextualized")]
    NotVerifiable { unit: String, label: UnitLabel },
    #[error("prompt template {name} has no {{{{{slot}}}}} slot")]
    Template { name: String, slot: &'static str },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnitLabel {
    Fact,
    Claim,
    ReportedClaim,
    Instruction,
    DataFormat,
    MetaStatement,
    Question,
    Other,
}

impl UnitLabel {
    pub const ALL: [UnitLabel; 8] = [
        UnitLabel::Fact,
        UnitLabel::Claim,
        UnitLabel::ReportedClaim,
        UnitLabel::Instruction,
        UnitLabel::DataFormat,
        UnitLabel::MetaStatement,
        UnitLabel::Question,
        UnitLabel::Other,
    ];

    /// The name used in prompts and model replies.
    pub fn as_str(self) -> &'static str {
        match self {
            UnitLabel::Fact => "Fact",
            UnitLabel::Claim => "Claim",
            UnitLabel::ReportedClaim => "Reported Claim",
            UnitLabel::Instruction => "Instruction",
            UnitLabel::DataFormat => "Data Format",
            UnitLabel::MetaStatement => "Meta Statement",
            UnitLabel::Question => "Question",
            UnitLabel::Other => "Other",
        }
    }

    pub fn is_verifiable(self) -> bool {
        matches!(self, UnitLabel::Fact | UnitLabel::Claim)
    }
}

impl fmt::Display for UnitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

impl FromStr for UnitLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = squash(s);
        let key = key.strip_suffix('s').filter(|k| *k == "metastatement").unwrap_or(&key);
        UnitLabel::ALL
            .into_iter()
            .find(|l| squash(l.as_str()) == key)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    pub raw_text: String,
    pub label: UnitLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decontextualized_text: Option<String>,
    pub source_segment: usize,
}

impl Unit {
    /// Text used for retrieval and judging.
    pub fn claim_text(&self) -> &str {
        self.decontextualized_text.as_deref().unwrap_or(&self.raw_text)
    }
}

/// A prompt asset with its content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub text: String,
    pub sha256: String,
}

impl PromptTemplate {
    pub fn new(name: &str, text: &str, slots: &[&'static str]) -> Result<Self, GroundingError> {
        for slot in slots {
            if !text.contains(&format!("{{{{{slot}}}}}")) {
                return Err(GroundingError::Template {
                    name: name.into(),
                    slot,
                });
            }
        }
        Ok(Self {
            name: name.into(),
            text: text.into(),
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = self.text.clone();
        for (slot, value) in values {
            out = out.replace(&format!("{{{{{slot}}}}}"), value);
        }
        out
    }
}

/// The extraction, decontextualization and judging prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub extract: PromptTemplate,
    pub decontextualize: PromptTemplate,
    pub judge: PromptTemplate,
}

const EXTRACT_SLOTS: &[&str] = &["context", "sentence"];
const DECONTEXTUALIZE_SLOTS: &[&str] = &["context", "unit"];
const JUDGE_SLOTS: &[&str] = &["evidence", "unit"];

impl Default for Prompts {
    fn default() -> Self {
        Self {
            extract: PromptTemplate::new("extract", include_str!("../../prompts/extract.txt"), EXTRACT_SLOTS)
                .expect("bundled template"),
            decontextualize: PromptTemplate::new(
                "decontextualize",
                include_str!("../../prompts/decontextualize.txt"),
                DECONTEXTUALIZE_SLOTS,
            )
            .expect("bundled template"),
            judge: PromptTemplate::new("judge", include_str!("../../prompts/judge.txt"), JUDGE_SLOTS)
                .expect("bundled template"),
        }
    }
}

impl Prompts {
    /// Loads `extract.txt`, `decontextualize.txt` and `judge.txt` from `dir`.
    pub fn load(dir: impl AsRef<std::path::Path>) -> Result<Self, GroundingError> {
        let dir = dir.as_ref();
        let read = |name: &str, slots| {
            let path = dir.join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| GroundingError::Io(format!("{}: {e}", path.display())))?;
            PromptTemplate::new(name, &text, slots)
        };
        Ok(Self {
            extract: read("extract", EXTRACT_SLOTS)?,
            decontextualize: read("decontextualize", DECONTEXTUALIZE_SLOTS)?,
            judge: read("judge", JUDGE_SLOTS)?,
        })
    }
}

const REPROMPT: &str = "\n\nYour previous reply could not be parsed. Reply again with the JSON only.";

/// Asks once, and once more with a format reminder if `parse` rejects the
/// first reply. Returns the parsed value, the final prompt, and whether both
/// replies failed to parse.
fn ask<T>(
    chat: &dyn ChatBackend,
    task: &'static str,
    prompt: String,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<(Result<T, String>, String), BackendError> {
    let reply = chat.chat_complete(&ChatRequest::new(prompt.clone()).with_task(task))?;
    if let Some(v) = parse(&reply) {
        return Ok((Ok(v), prompt));
    }
    let retry = format!("{prompt}{REPROMPT}");
    let reply = chat.chat_complete(&ChatRequest::new(retry.clone()).with_task(task))?;
    Ok((parse(&reply).ok_or(reply), retry))
}

/// The outermost `open`..`close` span of `reply`, which tolerates prose or code
/// fences around the JSON.
fn json_span(reply: &str, open: char, close: char) -> Option<&str> {
    let start = reply.find(open)?;
    let end = reply.rfind(close)?;
    (end > start).then(|| &reply[start..=end])
}

#[derive(Deserialize)]
struct RawUnit {
    text: String,
    label: String,
}

fn parse_units(reply: &str) -> Option<Vec<(String, UnitLabel)>> {
    let raw: Vec<RawUnit> = serde_json::from_str(json_span(reply, '[', ']')?).ok()?;
    raw.into_iter()
        .map(|u| {
            let text = u.text.trim().to_string();
            let label = u.label.parse().ok()?;
            (!text.is_empty()).then_some((text, label))
        })
        .collect()
}

/// Decomposes one segment into labelled units. `context` is the full response.
pub fn extract_units(
    segment: &str,
    segment_index: usize,
    context: &str,
    chat: &dyn ChatBackend,
    prompts: &Prompts,
) -> Result<Vec<Unit>, GroundingError> {
    let prompt = prompts.extract.render(&[("context", context), ("sentence", segment)]);
    let (parsed, _) = ask(chat, "extract", prompt, parse_units)?;
    let units = parsed.map_err(|reply| GroundingError::Malformed { task: "extract", reply })?;
    Ok(units
        .into_iter()
        .enumerate()
        .map(|(i, (raw_text, label))| Unit {
            id: format!("s{segment_index}u{i}"),
            raw_text,
            label,
            decontextualized_text: None,
            source_segment: segment_index,
        })
        .collect())
}

#[derive(Deserialize)]
struct RawRewrite {
    decontextualized: String,
}

fn parse_rewrite(reply: &str) -> Option<String> {
    let raw: RawRewrite = serde_json::from_str(json_span(reply, '{', '}')?).ok()?;
    let text = raw.decontextualized.trim().to_string();
    (!text.is_empty()).then_some(text)
}

/// Rewrites a Fact or Claim unit to stand on its own.
pub fn decontextualize(
    unit: &Unit,
    context: &str,
    chat: &dyn ChatBackend,
    prompts: &Prompts,
) -> Result<Unit, GroundingError> {
    if !unit.label.is_verifiable() {
        return Err(GroundingError::NotVerifiable {
            unit: unit.id.clone(),
            label: unit.label,
        });
    }
    let prompt = prompts
        .decontextualize
        .render(&[("context", context), ("unit", &unit.raw_text)]);
    let (parsed, _) = ask(chat, "decontextualize", prompt, parse_rewrite)?;
    let text = parsed.map_err(|reply| GroundingError::Malformed {
        task: "decontextualize",
        reply,
    })?;
    Ok(Unit {
        decontextualized_text: Some(text),
        ..unit.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceGroupKind {
    Credible,
    NonCredible,
    None,
}

impl SourceGroupKind {
    pub const ALL: [SourceGroupKind; 3] = [
        SourceGroupKind::Credible,
        SourceGroupKind::NonCredible,
        SourceGroupKind::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceGroupKind::Credible => "credible",
            SourceGroupKind::NonCredible => "non_credible",
            SourceGroupKind::None => "none",
        }
    }
}

impl fmt::Display for SourceGroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceGroup {
    pub kind: SourceGroupKind,
    pub citations: Vec<Citation>,
}

impl SourceGroup {
    pub fn is_empty(&self) -> bool {
        self.citations.is_empty()
    }
}

/// Splits the citations into credible (score > 0), non-credible (score < 0)
/// and none (score 0, including unrated), in that order.
pub fn partition_sources(transcript: &Transcript, db: &RatingDb) -> [SourceGroup; 3] {
    let mut groups = SourceGroupKind::ALL.map(|kind| SourceGroup {
        kind,
        citations: Vec::new(),
    });
    for c in &transcript.citations {
        let s = db.lookup(&c.domain).score();
        let slot = if s.is_credible() {
            0
        } else if s.is_non_credible() {
            1
        } else {
            2
        };
        groups[slot].citations.push(c.clone());
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Decision {
    Supported,
    Contradicted,
    Unverifiable,
}

impl FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "supported" => Ok(Decision::Supported),
            "contradicted" => Ok(Decision::Contradicted),
            "unverifiable" => Ok(Decision::Unverifiable),
            _ => Err(s.to_string()),
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Supported => "Supported",
            Decision::Contradicted => "Contradicted",
            Decision::Unverifiable => "Unverifiable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub doc_url: String,
    pub ordinal: usize,
    pub similarity: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub unit_id: String,
    pub group: SourceGroupKind,
    pub decision: Decision,
    pub judge_summary: String,
    #[serde(default)]
    pub relationship: String,
    /// sha256 of the prompt whose reply decided the verdict; `None` when no
    /// call was made.
    pub prompt_hash: Option<String>,
    pub parse_failure: bool,
    pub evidence: Vec<EvidenceRef>,
}

#[derive(Deserialize)]
struct RawJudgement {
    #[serde(default)]
    summary: String,
    #[serde(default)]
    relationship: String,
    decision: String,
}

fn parse_judgement(reply: &str) -> Option<(String, String, Decision)> {
    let raw: RawJudgement = serde_json::from_str(json_span(reply, '{', '}')?).ok()?;
    Some((raw.summary, raw.relationship, raw.decision.parse().ok()?))
}

/// Renders retrieved chunks for the judge prompt.
pub fn format_evidence(evidence: &RetrievalResult) -> String {
    evidence
        .hits
        .iter()
        .enumerate()
        .map(|(i, h)| format!("[{}] {} (part {})\n{}", i + 1, h.chunk.doc_url, h.chunk.ordinal, h.chunk.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Judges `unit` against one group's evidence. Empty evidence is
/// Unverifiable without a backend call; a reply that stays unparseable after
/// one reprompt is Unverifiable with `parse_failure` set.
pub fn judge(
    unit: &Unit,
    group: SourceGroupKind,
    evidence: &RetrievalResult,
    chat: &dyn ChatBackend,
    prompts: &Prompts,
) -> Result<Verdict, GroundingError> {
    let refs = evidence
        .hits
        .iter()
        .map(|h| EvidenceRef {
            doc_url: h.chunk.doc_url.clone(),
            ordinal: h.chunk.ordinal,
            similarity: h.similarity,
        })
        .collect();
    let mut verdict = Verdict {
        unit_id: unit.id.clone(),
        group,
        decision: Decision::Unverifiable,
        judge_summary: String::new(),
        relationship: String::new(),
        prompt_hash: None,
        parse_failure: false,
        evidence: refs,
    };
    if evidence.is_empty() {
        verdict.judge_summary = "no evidence retrieved for this source group".into();
        return Ok(verdict);
    }
    let prompt = prompts
        .judge
        .render(&[("evidence", &format_evidence(evidence)), ("unit", unit.claim_text())]);
    let (parsed, final_prompt) = ask(chat, "judge", prompt, parse_judgement)?;
    verdict.prompt_hash = Some(hex::encode(Sha256::digest(final_prompt.as_bytes())));
    match parsed {
        Ok((summary, relationship, decision)) => {
            verdict.judge_summary = summary;
            verdict.relationship = relationship;
            verdict.decision = decision;
        }
        Err(reply) => {
            verdict.parse_failure = true;
            verdict.judge_summary = reply;
        }
    }
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockScript};
    use crate::evidence::{EvidenceChunk, RetrievedChunk};

    fn mock(json: &str) -> MockBackend {
        MockBackend::new(serde_json::from_str::<MockScript>(json).unwrap()).unwrap()
    }

    fn unit(label: UnitLabel, text: &str) -> Unit {
        Unit {
            id: "s0u0".into(),
            raw_text: text.into(),
            label,
            decontextualized_text: None,
            source_segment: 0,
        }
    }

    fn evidence(texts: &[&str]) -> RetrievalResult {
        RetrievalResult {
            hits: texts
                .iter()
                .enumerate()
                .map(|(i, t)| RetrievedChunk {
                    chunk: EvidenceChunk {
                        doc_url: "https://a.org".into(),
                        ordinal: i,
                        text: t.to_string(),
                    },
                    similarity: 0.5,
                })
                .collect(),
            k: 5,
            empty_index: texts.is_empty(),
        }
    }

    #[test]
    fn labels_parse_loosely() {
        assert_eq!("Reported Claim".parse(), Ok(UnitLabel::ReportedClaim));
        assert_eq!("reported_claim".parse(), Ok(UnitLabel::ReportedClaim));
        assert_eq!("Meta Statements".parse(), Ok(UnitLabel::MetaStatement));
        assert_eq!("data-format".parse(), Ok(UnitLabel::DataFormat));
        assert!("Opinion".parse::<UnitLabel>().is_err());
        let verifiable: Vec<_> = UnitLabel::ALL.into_iter().filter(|l| l.is_verifiable()).collect();
        assert_eq!(verifiable, vec![UnitLabel::Fact, UnitLabel::Claim]);
    }

    #[test]
    fn bundled_prompts_have_their_slots() {
        let p = Prompts::default();
        let text = p.extract.render(&[("context", "CTX"), ("sentence", "S.")]);
        assert!(text.contains("Sentence to decompose: S.\n"));
        assert!(!text.contains("{{"));
        assert_eq!(p.judge.sha256.len(), 64);
        assert!(PromptTemplate::new("x", "no slots", &["unit"]).is_err());
    }

    #[test]
    fn extraction_passes_units_through() {
        let m = mock(
            r#"{"completions": [{"task": "extract", "contains": ["Sentence to decompose: Claims circulating online say vaccines alter DNA.\n"],
                "response": "[{\"text\": \"Claims circulating online say vaccines alter DNA.\", \"label\": \"Reported Claim\"}]"}]}"#,
        );
        let s = "Claims circulating online say vaccines alter DNA.";
        let units = extract_units(s, 3, s, &m, &Prompts::default()).unwrap();
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].label, UnitLabel::ReportedClaim);
        assert_eq!(units[0].id, "s3u0");
        assert_eq!(units[0].source_segment, 3);
    }

    #[test]
    fn extraction_reprompts_once_then_fails() {
        let m = mock(r#"{"completions": [{"task": "extract", "responses": ["nope", "[{\"text\": \"Is this true?\", \"label\": \"Question\"}]"]}]}"#);
        let units = extract_units("Is this true?", 0, "Is this true?", &m, &Prompts::default()).unwrap();
        assert_eq!(units[0].label, UnitLabel::Question);
        assert_eq!(m.chat_calls(), 2);
        let bad = MockBackend::constant("still not json");
        assert!(matches!(
            extract_units("x", 0, "x", &bad, &Prompts::default()),
            Err(GroundingError::Malformed { task: "extract", .. })
        ));
        assert_eq!(bad.chat_calls(), 2);
    }

    #[test]
    fn decontextualization_sees_unit_and_context() {
        let context = "Minister X faced protests. He resigned in 2022.";
        let m = mock(
            r#"{"completions": [{"task": "decontextualize",
                "contains": ["Unit to rewrite: He resigned in 2022", "Minister X faced protests."],
                "response": "{\"decontextualized\": \"Minister X resigned in 2022\"}"}]}"#,
        );
        let out = decontextualize(&unit(UnitLabel::Fact, "He resigned in 2022"), context, &m, &Prompts::default()).unwrap();
        assert_eq!(out.decontextualized_text.as_deref(), Some("Minister X resigned in 2022"));
        assert_eq!(out.raw_text, "He resigned in 2022");
        assert!(matches!(
            decontextualize(&unit(UnitLabel::MetaStatement, "I searched."), context, &m, &Prompts::default()),
            Err(GroundingError::NotVerifiable { .. })
        ));
    }

    #[test]
    fn judging() {
        let u = unit(UnitLabel::Fact, "Water boils at 100 C at sea level.");
        let empty = MockBackend::constant("{}");
        let v = judge(&u, SourceGroupKind::Credible, &evidence(&[]), &empty, &Prompts::default()).unwrap();
        assert_eq!(v.decision, Decision::Unverifiable);
        assert_eq!(empty.chat_calls(), 0);
        assert!(v.prompt_hash.is_none());

        let ok = MockBackend::constant(r#"{"summary": "s", "relationship": "r", "decision": "Supported"}"#);
        let v = judge(&u, SourceGroupKind::Credible, &evidence(&["boils at 100"]), &ok, &Prompts::default()).unwrap();
        assert_eq!(v.decision, Decision::Supported);
        assert!(!v.parse_failure);
        assert_eq!(v.evidence.len(), 1);

        let bad = MockBackend::constant(r#"{"decision": "Probably"}"#);
        let v = judge(&u, SourceGroupKind::None, &evidence(&["a"]), &bad, &Prompts::default()).unwrap();
        assert_eq!((v.decision, v.parse_failure), (Decision::Unverifiable, true));
        assert_eq!(bad.chat_calls(), 2);
    }

    #[test]
    fn partition_by_score() {
        use crate::corpus::Role;
        let db = RatingDb::from_reader(
            "domain,factuality,category,origin\nhi.org,High,Other,MBFC\nlo.org,Low,Other,MBFC\n".as_bytes(),
        )
        .unwrap();
        let t = Transcript {
            assistant_id: "a".into(),
            claim_id: "H1".into(),
            topic: None,
            role: Role::FactChecker,
            template_id: 1,
            response_text: String::new(),
            segments: Vec::new(),
            citations: ["hi.org", "lo.org", "unrated.org"]
                .iter()
                .enumerate()
                .map(|(i, d)| Citation::new(i as u32 + 1, &format!("https://{d}/")).unwrap())
                .collect(),
            refused: false,
            thinking_mode: false,
        };
        let [c, n, z] = partition_sources(&t, &db);
        assert_eq!(c.citations[0].domain, "hi.org");
        assert_eq!(n.citations[0].domain, "lo.org");
        assert_eq!(z.citations[0].domain, "unrated.org");
        assert_eq!(c.citations.len() + n.citations.len() + z.citations.len(), 3);
    }
}
