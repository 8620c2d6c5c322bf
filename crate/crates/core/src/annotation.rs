//! Span markers around erroneous text and the corrector's marked output.
//!
//! A sentence with spans at `[1, 3)` and `[5, 6)` renders as
//! `w0 <s1> w1 w2 </s1> w3 w4 <s2> w5 </s2>`. The corrector answers with
//! `<s1> .. </s1> <s2> .. </s2>` and [`merge_corrections`] splices each
//! answer back in place of its span.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{validate_ranges, SpanError, SpanList, SpanRange, TokenSeq};

/// Highest span number with a reserved marker.
pub const MAX_SPANS: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnnotationError {
    #[error("invalid spans: {0}")]
    Overlap(#[from] SpanError),
    #[error("{0} spans exceed the {MAX_SPANS} available markers")]
    TooManySpans(usize),
    #[error("token {index} ({token:?}) is a reserved span marker")]
    ReservedToken { index: usize, token: String },
    #[error("malformed markers at token {index}: {reason}")]
    MalformedMarkers { index: usize, reason: &'static str },
    #[error("no correction for span {0}")]
    MissingSpan(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marker {
    Open(usize),
    Close(usize),
}

impl Marker {
    /// Recognizes `<sK>` and `</sK>` for `K` in `1..=64`.
    pub fn parse(token: &str) -> Option<Marker> {
        let inner = token.strip_prefix('<')?.strip_suffix('>')?;
        let (close, body) = match inner.strip_prefix('/') {
            Some(rest) => (true, rest),
            None => (false, inner),
        };
        let digits = body.strip_prefix('s')?;
        if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let k: usize = digits.parse().ok()?;
        if !(1..=MAX_SPANS).contains(&k) {
            return None;
        }
        Some(if close { Marker::Close(k) } else { Marker::Open(k) })
    }

    pub fn open_token(k: usize) -> String {
        format!("<s{k}>")
    }

    pub fn close_token(k: usize) -> String {
        format!("</s{k}>")
    }
}

/// Rejects sentences containing literal marker tokens.
pub fn check_no_markers(tokens: &[String]) -> Result<(), AnnotationError> {
    match tokens.iter().position(|t| Marker::parse(t).is_some()) {
        Some(index) => Err(AnnotationError::ReservedToken {
            index,
            token: tokens[index].clone(),
        }),
        None => Ok(()),
    }
}

/// A source sentence with numbered span markers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub source: TokenSeq,
    pub spans: Vec<SpanRange>,
    pub rendered: TokenSeq,
}

impl AnnotatedSentence {
    pub fn has_spans(&self) -> bool {
        !self.spans.is_empty()
    }

    /// Tokens of the span at 0-based position `k` (marker number `k + 1`).
    pub fn span_tokens(&self, k: usize) -> &[String] {
        &self.source[self.spans[k].as_range()]
    }
}

/// Wraps each span of `source` in `<sK>` .. `</sK>`, numbering from 1.
pub fn annotate(source: &TokenSeq, spans: &[SpanRange]) -> Result<AnnotatedSentence, AnnotationError> {
    validate_ranges(spans.iter().copied(), source.len())?;
    if spans.len() > MAX_SPANS {
        return Err(AnnotationError::TooManySpans(spans.len()));
    }
    check_no_markers(source)?;
    let mut rendered = Vec::with_capacity(source.len() + 2 * spans.len());
    let mut pos = 0;
    for (k, span) in spans.iter().enumerate() {
        rendered.extend_from_slice(&source[pos..span.start]);
        rendered.push(Marker::open_token(k + 1));
        rendered.extend_from_slice(&source[span.as_range()]);
        rendered.push(Marker::close_token(k + 1));
        pos = span.end;
    }
    rendered.extend_from_slice(&source[pos..]);
    Ok(AnnotatedSentence {
        source: source.clone(),
        spans: spans.to_vec(),
        rendered: TokenSeq::new(rendered),
    })
}

/// Annotates with the ranges of an edit list.
pub fn annotate_edits(source: &TokenSeq, spans: &SpanList) -> Result<AnnotatedSentence, AnnotationError> {
    annotate(source, &spans.ranges())
}

/// Inverse of [`annotate`].
pub fn parse_annotation(rendered: &[String]) -> Result<AnnotatedSentence, AnnotationError> {
    let mut source = Vec::with_capacity(rendered.len());
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (index, token) in rendered.iter().enumerate() {
        match Marker::parse(token) {
            Some(Marker::Open(k)) => {
                if open.is_some() {
                    return Err(AnnotationError::MalformedMarkers {
                        index,
                        reason: "nested open marker",
                    });
                }
                if k != spans.len() + 1 {
                    return Err(AnnotationError::MalformedMarkers {
                        index,
                        reason: "span numbers must run 1, 2, .. in order",
                    });
                }
                open = Some((k, source.len()));
            }
            Some(Marker::Close(k)) => match open.take() {
                Some((ko, start)) if ko == k => {
                    if start == source.len() && !(start == 0 && index + 1 == rendered.len()) {
                        return Err(AnnotationError::MalformedMarkers {
                            index,
                            reason: "empty span",
                        });
                    }
                    spans.push(SpanRange::new(start, source.len()));
                }
                _ => {
                    return Err(AnnotationError::MalformedMarkers {
                        index,
                        reason: "close marker without matching open marker",
                    })
                }
            },
            None => source.push(token.clone()),
        }
    }
    if open.is_some() {
        return Err(AnnotationError::MalformedMarkers {
            index: rendered.len(),
            reason: "unterminated span",
        });
    }
    let source = TokenSeq::new(source);
    validate_ranges(spans.iter().copied(), source.len())?;
    Ok(AnnotatedSentence {
        source,
        spans,
        rendered: TokenSeq::new(rendered.to_vec()),
    })
}

/// Replacement text per span number, as produced by a corrector.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorrectionOutput {
    segments: Vec<(usize, TokenSeq)>,
}

impl CorrectionOutput {
    /// Builds from `(span_number, replacement)` pairs. Segments are sorted by
    /// number and only the first occurrence of a number is kept.
    pub fn new(mut segments: Vec<(usize, TokenSeq)>) -> Self {
        segments.retain(|(k, _)| *k >= 1);
        // Stable sort keeps the first occurrence of each number in front.
        segments.sort_by_key(|(k, _)| *k);
        segments.dedup_by_key(|(k, _)| *k);
        CorrectionOutput { segments }
    }

    pub fn segments(&self) -> &[(usize, TokenSeq)] {
        &self.segments
    }

    pub fn get(&self, k: usize) -> Option<&TokenSeq> {
        self.segments
            .binary_search_by_key(&k, |(n, _)| *n)
            .ok()
            .map(|i| &self.segments[i].1)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// `<s1> .. </s1> <s2> .. </s2>`
    pub fn render(&self) -> TokenSeq {
        let mut out = Vec::new();
        for (k, repl) in &self.segments {
            out.push(Marker::open_token(*k));
            out.extend_from_slice(repl);
            out.push(Marker::close_token(*k));
        }
        TokenSeq::new(out)
    }
}

/// Reads marked segments out of a corrector's output. Tokens outside any
/// marker pair are ignored.
pub fn parse_correction(output: &[String]) -> Result<CorrectionOutput, AnnotationError> {
    let mut segments = Vec::new();
    let mut open: Option<(usize, Vec<String>)> = None;
    for (index, token) in output.iter().enumerate() {
        match (Marker::parse(token), open.as_mut()) {
            (Some(Marker::Open(_)), Some(_)) => {
                return Err(AnnotationError::MalformedMarkers {
                    index,
                    reason: "nested open marker",
                })
            }
            (Some(Marker::Open(k)), None) => open = Some((k, Vec::new())),
            (Some(Marker::Close(k)), Some((ko, _))) if *ko == k => {
                let (k, body) = open.take().unwrap();
                segments.push((k, TokenSeq::new(body)));
            }
            (Some(Marker::Close(_)), _) => {
                return Err(AnnotationError::MalformedMarkers {
                    index,
                    reason: "close marker without matching open marker",
                })
            }
            (None, Some((_, body))) => body.push(token.clone()),
            (None, None) => {}
        }
    }
    if open.is_some() {
        return Err(AnnotationError::MalformedMarkers {
            index: output.len(),
            reason: "unterminated span",
        });
    }
    Ok(CorrectionOutput::new(segments))
}

/// What to do when the corrector did not answer for a span.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingSpanPolicy {
    /// Keep the source tokens of the span.
    #[default]
    Copy,
    Fail,
}

/// Substitutes each span of `annotated.source` with its corrected text.
pub fn merge_corrections(
    annotated: &AnnotatedSentence,
    corr: &CorrectionOutput,
    policy: MissingSpanPolicy,
) -> Result<TokenSeq, AnnotationError> {
    let source = &annotated.source;
    let mut out = Vec::with_capacity(source.len());
    let mut pos = 0;
    for (i, span) in annotated.spans.iter().enumerate() {
        let k = i + 1;
        out.extend_from_slice(&source[pos..span.start]);
        match (corr.get(k), policy) {
            (Some(repl), _) => out.extend_from_slice(repl),
            (None, MissingSpanPolicy::Copy) => out.extend_from_slice(&source[span.as_range()]),
            (None, MissingSpanPolicy::Fail) => return Err(AnnotationError::MissingSpan(k)),
        }
        pos = span.end;
    }
    out.extend_from_slice(&source[pos..]);
    Ok(TokenSeq::new(out))
}

/// One line of the annotated-instance JSONL format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub source: String,
    pub rendered: String,
    pub spans: Vec<[usize; 2]>,
    pub correction: Option<String>,
}

impl AnnotationRecord {
    pub fn new(annotated: &AnnotatedSentence, correction: Option<&CorrectionOutput>) -> Self {
        AnnotationRecord {
            source: annotated.source.join(),
            rendered: annotated.rendered.join(),
            spans: annotated.spans.iter().map(|r| [r.start, r.end]).collect(),
            correction: correction.map(|c| c.render().join()),
        }
    }

    /// Rebuilds the annotated sentence and, if present, the correction.
    /// The `rendered` field must agree with `source` and `spans`.
    pub fn decode(&self) -> Result<(AnnotatedSentence, Option<CorrectionOutput>), AnnotationError> {
        let source = crate::alignment::tokenize(&self.source);
        let spans: Vec<SpanRange> = self.spans.iter().map(|&[s, e]| SpanRange::new(s, e)).collect();
        let annotated = annotate(&source, &spans)?;
        let reparsed = parse_annotation(&crate::alignment::tokenize(&self.rendered))?;
        if reparsed.source != annotated.source || reparsed.spans != annotated.spans {
            return Err(AnnotationError::MalformedMarkers {
                index: 0,
                reason: "rendered text disagrees with source and spans",
            });
        }
        let correction = match &self.correction {
            Some(c) => Some(parse_correction(&crate::alignment::tokenize(c))?),
            None => None,
        };
        Ok((annotated, correction))
    }
}
