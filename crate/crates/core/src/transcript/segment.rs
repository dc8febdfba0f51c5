//! Sentence and paragraph segmentation with citation attachment.
//!
//! Segments partition the text: every byte belongs to exactly one segment, and
//! the whitespace after a boundary stays with the segment it closes.

use std::collections::BTreeSet;
use std::ops::Range;

use super::profile::Granularity;
use super::Segment;

/// Citation marker removed from the text at byte `offset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marker {
    pub offset: usize,
    pub indices: Vec<u32>,
}

/// A highlighted byte range of the text linked to citations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanRefs {
    pub range: Range<usize>,
    pub indices: Vec<u32>,
}

const TERMINAL: [char; 4] = ['.', '!', '?', '…'];
const CLOSERS: [char; 8] = ['"', '\'', ')', ']', '”', '’', '»', '*'];

/// Contiguous byte ranges covering `text`. Boundaries fall after a whitespace
/// run that contains a line break, or (sentence mode) after terminal
/// punctuation, optional closing quotes, and whitespace.
pub fn split_spans(text: &str, granularity: Granularity) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    let mut after_terminal = false;
    while let Some((i, c)) = chars.next() {
        if c.is_whitespace() {
            let mut end = i + c.len_utf8();
            let mut newline = c == '\n';
            while let Some(&(j, d)) = chars.peek() {
                if !d.is_whitespace() {
                    break;
                }
                newline |= d == '\n';
                end = j + d.len_utf8();
                chars.next();
            }
            let boundary = newline || (after_terminal && granularity == Granularity::Sentence);
            // a break only counts once the segment holds some content
            if boundary && end < text.len() && !text[start..i].trim().is_empty() {
                spans.push(start..end);
                start = end;
            }
            after_terminal = false;
            continue;
        }
        if TERMINAL.contains(&c) {
            after_terminal = true;
        } else if !(after_terminal && CLOSERS.contains(&c)) {
            after_terminal = false;
        }
    }
    if start < text.len() {
        spans.push(start..text.len());
    }
    spans
}

fn trimmed(text: &str, span: &Range<usize>) -> Range<usize> {
    let slice = &text[span.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let body = slice.trim();
    span.start + lead..span.start + lead + body.len()
}

/// Builds segments and attaches citations. A marker belongs to the segment
/// holding the character just before it; a highlight belongs to every segment
/// whose content it overlaps. Segments with no attached citation are paired
/// with every citation in `all_citations`.
pub fn segment_text(
    text: &str,
    markers: &[Marker],
    highlights: &[SpanRefs],
    all_citations: &BTreeSet<u32>,
    granularity: Granularity,
) -> Vec<Segment> {
    let spans = split_spans(text, granularity);
    let mut refs: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); spans.len()];

    for marker in markers {
        let probe = marker.offset.saturating_sub(1);
        let target = spans
            .iter()
            .position(|s| s.contains(&probe))
            .or_else(|| spans.len().checked_sub(1));
        if let Some(i) = target {
            refs[i].extend(marker.indices.iter().copied());
        }
    }
    for hl in highlights {
        for (i, span) in spans.iter().enumerate() {
            let content = trimmed(text, span);
            if hl.range.start < content.end && content.start < hl.range.end {
                refs[i].extend(hl.indices.iter().copied());
            }
        }
    }

    spans
        .into_iter()
        .zip(refs)
        .map(|(span, refs)| {
            let explicit = !refs.is_empty();
            Segment {
                text: text[span].to_string(),
                citation_refs: if explicit { refs } else { all_citations.clone() },
                explicit,
            }
        })
        .collect()
}
