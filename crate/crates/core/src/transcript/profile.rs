//! Provider profiles and normalization of archived conversations.
//!
//! An archive holds the response body (plain text or HTML) and the list of
//! sources the interface showed. The profile says how citations are attached
//! to the text: trailing markers, highlighted spans, or not at all.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use ego_tree::NodeRef;
use regex::Regex;
use scraper::{ElementRef, Html, Node, Selector};
use serde::{Deserialize, Serialize};

use super::segment::{segment_text, Marker, SpanRefs};
use super::{detect_refusal, Citation, RefusalRules, Transcript, TranscriptError};
use crate::corpus::{Role, Topic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationStrategy {
    /// Hover or highlight metadata links spans of the text to sources.
    HighlightMap,
    /// Markers at the end of sentences or paragraphs.
    TrailingMarker,
    /// No association; every segment is paired with every source.
    FallbackAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyFormat {
    #[default]
    Text,
    Html,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Sentence,
    Paragraph,
}

/// Markup patterns. CSS selectors for HTML bodies; `marker_pattern` is a
/// regex whose first group lists citation numbers in plain-text bodies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Selectors {
    pub block: String,
    pub marker: Option<String>,
    pub marker_attr: Option<String>,
    pub highlight: Option<String>,
    pub highlight_attr: Option<String>,
    pub exclude: String,
    pub marker_pattern: String,
}

impl Default for Selectors {
    fn default() -> Self {
        Self {
            block: "p, li, h1, h2, h3, h4, h5, h6, blockquote, pre, td, th".into(),
            marker: None,
            marker_attr: None,
            highlight: None,
            highlight_attr: None,
            exclude: "script, style, noscript, template, button, svg".into(),
            marker_pattern: r"\[(\d+(?:\s*[,;]\s*\d+)*)\]".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub name: String,
    #[serde(rename = "strategy")]
    pub association_strategy: AssociationStrategy,
    #[serde(default)]
    pub format: BodyFormat,
    #[serde(default)]
    pub granularity: Granularity,
    /// Keep only sources referenced from the body, dropping the rest of the
    /// interface's source list.
    #[serde(default)]
    pub cited_only: bool,
    #[serde(default)]
    pub selectors: Selectors,
}

impl ProviderProfile {
    pub fn new(name: &str, strategy: AssociationStrategy, format: BodyFormat) -> Self {
        Self {
            name: name.into(),
            association_strategy: strategy,
            format,
            granularity: Granularity::Sentence,
            cited_only: false,
            selectors: Selectors::default(),
        }
    }
}

/// Profiles for the archive layouts the built-in fixtures use.
pub fn builtin_profile(name: &str) -> Option<ProviderProfile> {
    use AssociationStrategy::*;
    let mut p = match name {
        "plain" => ProviderProfile::new(name, TrailingMarker, BodyFormat::Text),
        "fallback" => ProviderProfile::new(name, FallbackAll, BodyFormat::Text),
        "highlight-html" | "gpt-4o" => {
            let mut p = ProviderProfile::new(name, HighlightMap, BodyFormat::Html);
            p.selectors.highlight = Some("[data-source-refs]".into());
            p.selectors.highlight_attr = Some("data-source-refs".into());
            p
        }
        "marker-html" | "gpt-5" | "qwen" => {
            let mut p = ProviderProfile::new(name, TrailingMarker, BodyFormat::Html);
            p.selectors.marker = Some("sup.citation, span.citation, a.citation".into());
            p.selectors.marker_attr = Some("data-index".into());
            p
        }
        "perplexity" => {
            let mut p = ProviderProfile::new(name, TrailingMarker, BodyFormat::Html);
            p.selectors.marker = Some("a.citation".into());
            p.selectors.marker_attr = Some("href".into());
            p.cited_only = true;
            p
        }
        _ => return None,
    };
    p.name = name.into();
    Some(p)
}

/// Reads a JSON file holding one profile or an array of profiles.
pub fn load_profiles(path: impl AsRef<Path>) -> Result<Vec<ProviderProfile>, TranscriptError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TranscriptError::Io {
        path: path.display().to_string(),
        source,
    })?;
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(ProviderProfile),
        Many(Vec<ProviderProfile>),
    }
    let parsed: OneOrMany = serde_json::from_str(&text).map_err(|source| TranscriptError::Json {
        path: path.display().to_string(),
        source,
    })?;
    Ok(match parsed {
        OneOrMany::One(p) => vec![p],
        OneOrMany::Many(ps) => ps,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSource {
    #[serde(default)]
    pub index: Option<u32>,
    pub url: String,
}

/// Captured hover highlight: a quoted span of the answer and its sources.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawHighlight {
    pub text: String,
    pub sources: Vec<u32>,
}

/// One archived conversation as collected from a provider interface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawArchive {
    pub assistant_id: String,
    pub claim_id: String,
    #[serde(default)]
    pub topic: Option<Topic>,
    pub role: Role,
    pub template_id: u8,
    #[serde(default)]
    pub thinking_mode: bool,
    /// Profile name; the ingest command falls back to its default profile.
    #[serde(default)]
    pub profile: Option<String>,
    pub body: String,
    #[serde(default)]
    pub sources: Vec<RawSource>,
    #[serde(default)]
    pub highlights: Vec<RawHighlight>,
}

struct Extracted {
    text: String,
    markers: Vec<Marker>,
    highlights: Vec<SpanRefs>,
}

fn selector(pattern: &str) -> Result<Selector, TranscriptError> {
    Selector::parse(pattern).map_err(|e| TranscriptError::Profile(format!("selector {pattern:?}: {e}")))
}

fn parse_indices(value: &str) -> Vec<u32> {
    value
        .split(|c: char| !c.is_ascii_digit())
        .filter_map(|d| d.parse().ok())
        .collect()
}

struct Resolver<'a> {
    citations: &'a [Citation],
    by_url: HashMap<&'a str, u32>,
}

impl<'a> Resolver<'a> {
    fn new(citations: &'a [Citation]) -> Self {
        let by_url = citations
            .iter()
            .map(|c| (c.url.trim_end_matches('/'), c.index))
            .collect();
        Self { citations, by_url }
    }

    /// A marker value is either citation numbers or a source URL.
    fn resolve(&self, value: &str) -> Result<Vec<u32>, TranscriptError> {
        let value = value.trim();
        let indices = if value.contains("://") {
            match self.by_url.get(value.trim_end_matches('/')) {
                Some(&i) => vec![i],
                None => return Err(TranscriptError::MissingSource(value.to_string())),
            }
        } else {
            parse_indices(value)
        };
        if indices.is_empty() {
            return Err(TranscriptError::Markup(format!("citation marker {value:?} names no source")));
        }
        if let Some(bad) = indices.iter().find(|i| !self.citations.iter().any(|c| c.index == **i)) {
            return Err(TranscriptError::MissingSource(bad.to_string()));
        }
        Ok(indices)
    }
}

fn extract_text_body(
    body: &str,
    profile: &ProviderProfile,
    resolver: &Resolver<'_>,
) -> Result<Extracted, TranscriptError> {
    if profile.association_strategy != AssociationStrategy::TrailingMarker {
        return Ok(Extracted {
            text: body.to_string(),
            markers: Vec::new(),
            highlights: Vec::new(),
        });
    }
    let pattern = Regex::new(&profile.selectors.marker_pattern)
        .map_err(|e| TranscriptError::Profile(format!("marker pattern: {e}")))?;
    let mut text = String::with_capacity(body.len());
    let mut markers = Vec::new();
    let mut last = 0;
    for caps in pattern.captures_iter(body) {
        let whole = caps.get(0).expect("match");
        text.push_str(&body[last..whole.start()]);
        let kept = text.trim_end_matches([' ', '\t']).len();
        text.truncate(kept);
        let value = caps.get(1).map_or(whole.as_str(), |g| g.as_str());
        markers.push(Marker {
            offset: text.len(),
            indices: resolver.resolve(value)?,
        });
        last = whole.end();
    }
    text.push_str(&body[last..]);
    Ok(Extracted {
        text,
        markers,
        highlights: Vec::new(),
    })
}

struct HtmlWalker<'s> {
    marker: Option<Selector>,
    marker_attr: Option<&'s str>,
    highlight: Option<Selector>,
    highlight_attr: Option<&'s str>,
    exclude: Selector,
    text: String,
    markers: Vec<Marker>,
    highlights: Vec<SpanRefs>,
}

impl HtmlWalker<'_> {
    fn push_text(&mut self, t: &str) {
        for c in t.chars() {
            if c.is_whitespace() {
                if !self.text.is_empty() && !self.text.ends_with([' ', '\n']) {
                    self.text.push(' ');
                }
            } else {
                self.text.push(c);
            }
        }
    }

    fn walk(&mut self, node: NodeRef<'_, Node>, resolver: &Resolver<'_>) -> Result<(), TranscriptError> {
        for child in node.children() {
            match child.value() {
                Node::Text(t) => self.push_text(t),
                Node::Element(el) => {
                    let el_ref = ElementRef::wrap(child).expect("element node");
                    if self.exclude.matches(&el_ref) {
                        continue;
                    }
                    if el.name() == "br" {
                        let kept = self.text.trim_end_matches(' ').len();
                        self.text.truncate(kept);
                        self.text.push('\n');
                        continue;
                    }
                    if self.marker.as_ref().is_some_and(|s| s.matches(&el_ref)) {
                        let value = match self.marker_attr {
                            Some(attr) => el.attr(attr).map(str::to_string),
                            None => None,
                        }
                        .unwrap_or_else(|| el_ref.text().collect());
                        let kept = self.text.trim_end_matches(' ').len();
                        self.text.truncate(kept);
                        self.markers.push(Marker {
                            offset: self.text.len(),
                            indices: resolver.resolve(&value)?,
                        });
                        continue;
                    }
                    if self.highlight.as_ref().is_some_and(|s| s.matches(&el_ref)) {
                        let value = self
                            .highlight_attr
                            .and_then(|a| el.attr(a))
                            .ok_or_else(|| TranscriptError::Markup("highlight without source attribute".into()))?
                            .to_string();
                        let indices = resolver.resolve(&value)?;
                        let start = self.text.len();
                        self.walk(child, resolver)?;
                        self.highlights.push(SpanRefs {
                            range: start..self.text.len(),
                            indices,
                        });
                        continue;
                    }
                    self.walk(child, resolver)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn finish_block(&mut self) {
        let kept = self.text.trim_end().len();
        self.text.truncate(kept);
    }
}

fn extract_html_body(
    body: &str,
    profile: &ProviderProfile,
    resolver: &Resolver<'_>,
) -> Result<Extracted, TranscriptError> {
    let doc = Html::parse_fragment(body);
    let sel = &profile.selectors;
    let block = selector(&sel.block)?;
    let uses_markers = profile.association_strategy == AssociationStrategy::TrailingMarker;
    let uses_highlights = profile.association_strategy == AssociationStrategy::HighlightMap;
    let marker = match (&sel.marker, uses_markers) {
        (Some(m), true) => Some(selector(m)?),
        (None, true) => {
            return Err(TranscriptError::Profile(format!(
                "profile {:?} needs a marker selector",
                profile.name
            )))
        }
        _ => None,
    };
    let highlight = match (&sel.highlight, uses_highlights) {
        (Some(h), true) => Some(selector(h)?),
        (None, true) => {
            return Err(TranscriptError::Profile(format!(
                "profile {:?} needs a highlight selector",
                profile.name
            )))
        }
        _ => None,
    };
    // markers inside a FallbackAll body still have to leave the text
    let strip_markers = match (&sel.marker, uses_markers) {
        (Some(m), false) => Some(selector(m)?),
        _ => None,
    };
    let mut exclude = sel.exclude.clone();
    if let Some(m) = strip_markers.as_ref().and(sel.marker.as_ref()) {
        exclude = format!("{exclude}, {m}");
    }
    let mut walker = HtmlWalker {
        marker,
        marker_attr: sel.marker_attr.as_deref(),
        highlight,
        highlight_attr: sel.highlight_attr.as_deref(),
        exclude: selector(&exclude)?,
        text: String::new(),
        markers: Vec::new(),
        highlights: Vec::new(),
    };

    let root = doc.root_element();
    let blocks: Vec<ElementRef<'_>> = root
        .select(&block)
        .filter(|el| {
            !el.ancestors()
                .filter_map(ElementRef::wrap)
                .any(|a| a != root && block.matches(&a))
        })
        .collect();
    if blocks.is_empty() {
        walker.walk(*root, resolver)?;
        walker.finish_block();
    } else {
        for el in blocks {
            let before = walker.text.len();
            if before > 0 {
                walker.text.push_str("\n\n");
            }
            walker.walk(*el, resolver)?;
            walker.finish_block();
            if walker.text.len() == before + 2 && before > 0 {
                walker.text.truncate(before);
            }
        }
    }
    let len = walker.text.len();
    for m in &mut walker.markers {
        m.offset = m.offset.min(len);
    }
    Ok(Extracted {
        text: walker.text,
        markers: walker.markers,
        highlights: walker.highlights,
    })
}

fn locate_highlights(
    text: &str,
    raw: &[super::profile::RawHighlight],
    resolver: &Resolver<'_>,
) -> Result<Vec<SpanRefs>, TranscriptError> {
    let mut cursor = 0;
    let mut out = Vec::new();
    for hl in raw {
        let needle = hl.text.trim();
        if needle.is_empty() {
            continue;
        }
        let start = text[cursor..]
            .find(needle)
            .map(|p| p + cursor)
            .or_else(|| text.find(needle))
            .ok_or_else(|| TranscriptError::Markup(format!("highlight {needle:?} not found in the response")))?;
        let joined = hl.sources.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        out.push(SpanRefs {
            range: start..start + needle.len(),
            indices: resolver.resolve(&joined)?,
        });
        cursor = start + needle.len();
    }
    Ok(out)
}

/// Converts an archived conversation into a canonical transcript.
pub fn normalize(
    raw: &RawArchive,
    profile: &ProviderProfile,
    rules: &RefusalRules,
) -> Result<Transcript, TranscriptError> {
    let mut citations = Vec::with_capacity(raw.sources.len());
    let mut seen = BTreeSet::new();
    for (i, source) in raw.sources.iter().enumerate() {
        let index = source.index.unwrap_or(i as u32 + 1);
        if !seen.insert(index) {
            return Err(TranscriptError::DuplicateCitation(index));
        }
        citations.push(Citation::new(index, &source.url)?);
    }

    let resolver = Resolver::new(&citations);
    let mut extracted = match profile.format {
        BodyFormat::Text => extract_text_body(&raw.body, profile, &resolver)?,
        BodyFormat::Html => extract_html_body(&raw.body, profile, &resolver)?,
    };
    if profile.association_strategy == AssociationStrategy::HighlightMap && !raw.highlights.is_empty() {
        let located = locate_highlights(&extracted.text, &raw.highlights, &resolver)?;
        extracted.highlights.extend(located);
    }

    if profile.cited_only {
        let used: BTreeSet<u32> = extracted
            .markers
            .iter()
            .flat_map(|m| m.indices.iter())
            .chain(extracted.highlights.iter().flat_map(|h| h.indices.iter()))
            .copied()
            .collect();
        citations.retain(|c| used.contains(&c.index));
    }

    let text = if extracted.text.trim().is_empty() {
        String::new()
    } else {
        extracted.text
    };
    let all: BTreeSet<u32> = citations.iter().map(|c| c.index).collect();
    let segments = segment_text(
        &text,
        &extracted.markers,
        &extracted.highlights,
        &all,
        profile.granularity,
    );

    let mut transcript = Transcript {
        assistant_id: raw.assistant_id.clone(),
        claim_id: raw.claim_id.clone(),
        topic: raw.topic,
        role: raw.role,
        template_id: raw.template_id,
        response_text: text,
        segments,
        citations,
        refused: false,
        thinking_mode: raw.thinking_mode,
    };
    transcript.refused = detect_refusal(&transcript, rules);
    if transcript.response_text.is_empty() {
        transcript.segments.clear();
    }
    transcript.validate()?;
    Ok(transcript)
}
