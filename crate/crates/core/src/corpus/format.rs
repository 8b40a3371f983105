//! Line grammars of the `.con` and `.rel` annotation files.
//!
//! ```text
//! concept:  c="<text>" L:S L:E||t="<type>"
//! relation: c="<text1>" L:S1 L:E1||r="<LABEL>"||c="<text2>" L:S2 L:E2
//! ```

use std::fmt;

use super::{ConceptSpan, CorpusError, RelationLabel, Result};

/// A concept mention as written in a relation line (no type).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpanRef {
    pub text: String,
    pub line: usize,
    pub tok_start: usize,
    pub tok_end: usize,
}

impl fmt::Display for SpanRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "c=\"{}\" {}:{} {}:{}",
            self.text, self.line, self.tok_start, self.line, self.tok_end
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationLine {
    pub first: SpanRef,
    pub label: RelationLabel,
    pub second: SpanRef,
}

impl fmt::Display for RelationLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}||r=\"{}\"||{}", self.first, self.label, self.second)
    }
}

fn err(offset: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        offset,
        reason: reason.into(),
    }
}

struct Offsets {
    line_a: usize,
    start: usize,
    line_b: usize,
    end: usize,
    /// Byte position just after the offsets.
    next: usize,
}

fn take_number(s: &str, pos: usize) -> Option<(usize, usize)> {
    let digits = s[pos..].bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let n = s[pos..pos + digits].parse().ok()?;
    Some((n, pos + digits))
}

/// Matches ` L:S L:E` starting at `pos`, which must be a single space.
fn take_offsets(s: &str, pos: usize) -> Option<Offsets> {
    let b = s.as_bytes();
    if b.get(pos) != Some(&b' ') {
        return None;
    }
    let (line_a, p) = take_number(s, pos + 1)?;
    if b.get(p) != Some(&b':') {
        return None;
    }
    let (start, p) = take_number(s, p + 1)?;
    if b.get(p) != Some(&b' ') {
        return None;
    }
    let (line_b, p) = take_number(s, p + 1)?;
    if b.get(p) != Some(&b':') {
        return None;
    }
    let (end, p) = take_number(s, p + 1)?;
    Some(Offsets {
        line_a,
        start,
        line_b,
        end,
        next: p,
    })
}

/// Parses `c="<text>" L:S L:E` at `pos`; returns the span and the byte
/// position following it. The closing quote is the first `"` followed by a
/// well-formed offset block and then `||` or end of line, so concept texts
/// may themselves contain quotes.
fn take_span(s: &str, pos: usize) -> Result<(SpanRef, usize)> {
    if !s[pos..].starts_with("c=\"") {
        return Err(err(pos, "expected `c=\"`"));
    }
    let text_start = pos + 3;
    let mut search = text_start;
    let (quote, offsets) = loop {
        let q = s[search..]
            .find('"')
            .map(|i| search + i)
            .ok_or_else(|| err(text_start, "unterminated concept text"))?;
        if let Some(o) = take_offsets(s, q + 1) {
            if o.next == s.len() || s[o.next..].starts_with("||") {
                break (q, o);
            }
        }
        search = q + 1;
    };
    if offsets.line_a != offsets.line_b {
        return Err(err(quote + 1, "cross-line spans are not supported"));
    }
    if offsets.start > offsets.end {
        return Err(CorpusError::Range {
            start: offsets.start,
            end: offsets.end,
        });
    }
    if offsets.line_a == 0 {
        return Err(err(quote + 2, "line numbers are 1-based"));
    }
    Ok((
        SpanRef {
            text: s[text_start..quote].to_string(),
            line: offsets.line_a,
            tok_start: offsets.start,
            tok_end: offsets.end,
        },
        offsets.next,
    ))
}

/// Parses `||<key>="<value>"` at `pos`.
fn take_field<'a>(s: &'a str, pos: usize, key: &str) -> Result<(&'a str, usize)> {
    let prefix = format!("||{key}=\"");
    if !s[pos..].starts_with(&prefix) {
        return Err(err(pos, format!("expected `{prefix}`")));
    }
    let v_start = pos + prefix.len();
    let v_end = s[v_start..]
        .find('"')
        .map(|i| v_start + i)
        .ok_or_else(|| err(v_start, format!("unterminated {key} value")))?;
    Ok((&s[v_start..v_end], v_end + 1))
}

fn strip_eol(line: &str) -> &str {
    line.trim_end_matches(['\n', '\r'])
}

pub fn parse_concept_line(line: &str) -> Result<ConceptSpan> {
    let s = strip_eol(line);
    let (span, pos) = take_span(s, 0)?;
    let (ctype, pos) = take_field(s, pos, "t")?;
    if pos != s.len() {
        return Err(err(pos, "trailing characters"));
    }
    let ctype = ctype.parse().map_err(|_| err(pos - ctype.len() - 1, format!("unknown concept type {ctype:?}")))?;
    Ok(ConceptSpan {
        text: span.text,
        line: span.line,
        tok_start: span.tok_start,
        tok_end: span.tok_end,
        ctype,
    })
}

pub fn parse_relation_line(line: &str) -> Result<RelationLine> {
    let s = strip_eol(line);
    let (first, pos) = take_span(s, 0)?;
    let (label, pos) = take_field(s, pos, "r")?;
    let label: RelationLabel = label.parse()?;
    if !label.is_positive() {
        return Err(CorpusError::Label(label.to_string()));
    }
    if !s[pos..].starts_with("||") {
        return Err(err(pos, "expected `||` before second concept"));
    }
    let (second, pos) = take_span(s, pos + 2)?;
    if pos != s.len() {
        return Err(err(pos, "trailing characters"));
    }
    Ok(RelationLine {
        first,
        label,
        second,
    })
}
