//! Token alignment between a source sentence and its correction.
//!
//! The alignment is a unit-cost Levenshtein path over whole tokens. Maximal
//! runs of non-matching operations on that path become [`EditSpan`]s: a
//! contiguous range of source tokens together with the target tokens that
//! replace it. Those spans are what the detector learns to tag and what the
//! corrector learns to rewrite.

use std::fmt;
use std::ops::{Deref, Range};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A whitespace-tokenized sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenSeq(tokens)
    }

    pub fn empty() -> Self {
        TokenSeq(Vec::new())
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    /// Tokens joined with single spaces.
    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.join())
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().map(Into::into).collect())
    }
}

impl From<Vec<String>> for TokenSeq {
    fn from(tokens: Vec<String>) -> Self {
        TokenSeq(tokens)
    }
}

impl From<&[&str]> for TokenSeq {
    fn from(tokens: &[&str]) -> Self {
        tokens.iter().copied().collect()
    }
}

/// Splits on unicode whitespace. Punctuation is left as-is.
pub fn tokenize(text: &str) -> TokenSeq {
    text.split_whitespace().collect()
}

/// One step of an alignment path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlignOp {
    Match { src: usize, tgt: usize },
    Subst { src: usize, tgt: usize },
    Insert { tgt: usize },
    Delete { src: usize },
}

impl AlignOp {
    pub fn src(&self) -> Option<usize> {
        match *self {
            AlignOp::Match { src, .. } | AlignOp::Subst { src, .. } | AlignOp::Delete { src } => Some(src),
            AlignOp::Insert { .. } => None,
        }
    }

    pub fn tgt(&self) -> Option<usize> {
        match *self {
            AlignOp::Match { tgt, .. } | AlignOp::Subst { tgt, .. } | AlignOp::Insert { tgt } => Some(tgt),
            AlignOp::Delete { .. } => None,
        }
    }

    pub fn is_match(&self) -> bool {
        matches!(self, AlignOp::Match { .. })
    }
}

/// A minimal-cost edit script turning the source into the target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentPath {
    pub ops: Vec<AlignOp>,
    pub cost: usize,
    src_len: usize,
    tgt_len: usize,
}

impl AlignmentPath {
    pub fn src_len(&self) -> usize {
        self.src_len
    }

    pub fn tgt_len(&self) -> usize {
        self.tgt_len
    }

    /// Groups the path into maximal non-match runs, each described by the
    /// source and target ranges it consumes.
    fn runs(&self) -> Vec<Run> {
        let mut runs = Vec::new();
        let (mut si, mut ti) = (0usize, 0usize);
        let mut i = 0;
        while i < self.ops.len() {
            if self.ops[i].is_match() {
                si += 1;
                ti += 1;
                i += 1;
                continue;
            }
            let (s0, t0) = (si, ti);
            while i < self.ops.len() && !self.ops[i].is_match() {
                if self.ops[i].src().is_some() {
                    si += 1;
                }
                if self.ops[i].tgt().is_some() {
                    ti += 1;
                }
                i += 1;
            }
            runs.push(Run {
                src: s0..si,
                tgt: t0..ti,
            });
        }
        runs
    }

    /// For every target token, the source token it is attributed to.
    ///
    /// Matched and substituted tokens belong to their aligned source token.
    /// Insertions inside a run that also consumes source tokens belong to the
    /// nearest preceding source token of that run (or its first one). Pure
    /// insertions belong to the source token on their left, or to token 0 at
    /// the start of the sentence. The result is non-decreasing.
    pub fn target_owners(&self) -> Vec<usize> {
        let mut owners = vec![0usize; self.tgt_len];
        let mut i = 0;
        let mut last_src: Option<usize> = None;
        while i < self.ops.len() {
            match self.ops[i] {
                AlignOp::Match { src, tgt } => {
                    owners[tgt] = src;
                    last_src = Some(src);
                    i += 1;
                }
                _ => {
                    let start = i;
                    while i < self.ops.len() && !self.ops[i].is_match() {
                        i += 1;
                    }
                    let run = &self.ops[start..i];
                    let first_src = run.iter().find_map(AlignOp::src);
                    let mut cursor = match first_src {
                        Some(s) => s,
                        None => last_src.unwrap_or(0),
                    };
                    for op in run {
                        if let Some(s) = op.src() {
                            cursor = s;
                            last_src = Some(s);
                        }
                        if let Some(t) = op.tgt() {
                            owners[t] = cursor;
                        }
                    }
                }
            }
        }
        owners
    }

    /// Target tokens attributed to the source range `[start, end)`.
    ///
    /// With an empty source the whole target is attributed to `[0, 0)`.
    pub fn project(&self, start: usize, end: usize) -> Range<usize> {
        if self.src_len == 0 {
            return if start == 0 { 0..self.tgt_len } else { 0..0 };
        }
        let owners = self.target_owners();
        project_with_owners(&owners, start, end)
    }
}

pub(crate) fn project_with_owners(owners: &[usize], start: usize, end: usize) -> Range<usize> {
    let lo = owners.partition_point(|&o| o < start);
    let hi = owners.partition_point(|&o| o < end);
    lo..hi.max(lo)
}

struct Run {
    src: Range<usize>,
    tgt: Range<usize>,
}

/// Aligns `source` to `target` with unit costs; token equality is exact.
///
/// Backtrace ties are broken DELETE, then INSERT, then SUBST, then MATCH.
pub fn align(source: &[String], target: &[String]) -> AlignmentPath {
    let n = source.len();
    let m = target.len();
    let width = m + 1;
    let mut dist = vec![0usize; (n + 1) * width];
    for (j, d) in dist[..width].iter_mut().enumerate() {
        *d = j;
    }
    for i in 1..=n {
        dist[i * width] = i;
        for j in 1..=m {
            let diag = dist[(i - 1) * width + j - 1] + usize::from(source[i - 1] != target[j - 1]);
            let del = dist[(i - 1) * width + j] + 1;
            let ins = dist[i * width + j - 1] + 1;
            dist[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dist[i * width + j];
        if i > 0 && dist[(i - 1) * width + j] + 1 == here {
            ops.push(AlignOp::Delete { src: i - 1 });
            i -= 1;
        } else if j > 0 && dist[i * width + j - 1] + 1 == here {
            ops.push(AlignOp::Insert { tgt: j - 1 });
            j -= 1;
        } else if source[i - 1] != target[j - 1] {
            ops.push(AlignOp::Subst {
                src: i - 1,
                tgt: j - 1,
            });
            i -= 1;
            j -= 1;
        } else {
            ops.push(AlignOp::Match {
                src: i - 1,
                tgt: j - 1,
            });
            i -= 1;
            j -= 1;
        }
    }
    ops.reverse();
    AlignmentPath {
        ops,
        cost: dist[n * width + m],
        src_len: n,
        tgt_len: m,
    }
}

/// Half-open range of source tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanRange {
    pub start: usize,
    pub end: usize,
}

impl SpanRange {
    pub fn new(start: usize, end: usize) -> Self {
        SpanRange { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index < self.end
    }

    pub fn as_range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// A contiguous source range and the tokens that replace it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EditSpan {
    pub src_start: usize,
    pub src_end: usize,
    pub replacement: TokenSeq,
}

impl EditSpan {
    pub fn new(src_start: usize, src_end: usize, replacement: TokenSeq) -> Self {
        EditSpan {
            src_start,
            src_end,
            replacement,
        }
    }

    pub fn range(&self) -> SpanRange {
        SpanRange::new(self.src_start, self.src_end)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpanError {
    #[error("span {index} is empty or reversed ({start}..{end})")]
    EmptySpan { index: usize, start: usize, end: usize },
    #[error("span {index} ends at {end}, past the sentence length {len}")]
    OutOfBounds { index: usize, end: usize, len: usize },
    #[error("span {index} starts at {start}, before the previous span ends at {prev_end}")]
    Overlap {
        index: usize,
        start: usize,
        prev_end: usize,
    },
}

/// Checks that `ranges` are non-empty, sorted, non-overlapping and inside a
/// sentence of `len` tokens. The single range `[0, 0)` is accepted for an
/// empty sentence, where it stands for an insertion into nothing.
pub fn validate_ranges<I>(ranges: I, len: usize) -> Result<(), SpanError>
where
    I: IntoIterator<Item = SpanRange>,
{
    let mut prev_end = 0usize;
    for (index, r) in ranges.into_iter().enumerate() {
        let degenerate = len == 0 && index == 0 && r.start == 0 && r.end == 0;
        if !degenerate && r.start >= r.end {
            return Err(SpanError::EmptySpan {
                index,
                start: r.start,
                end: r.end,
            });
        }
        if r.end > len {
            return Err(SpanError::OutOfBounds {
                index,
                end: r.end,
                len,
            });
        }
        if index > 0 && r.start < prev_end {
            return Err(SpanError::Overlap {
                index,
                start: r.start,
                prev_end,
            });
        }
        prev_end = r.end;
    }
    Ok(())
}

/// Sorted, non-overlapping edit spans over one source sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SpanList(Vec<EditSpan>);

impl SpanList {
    pub fn new(spans: Vec<EditSpan>, src_len: usize) -> Result<Self, SpanError> {
        validate_ranges(spans.iter().map(EditSpan::range), src_len)?;
        Ok(SpanList(spans))
    }

    pub fn empty() -> Self {
        SpanList(Vec::new())
    }

    pub fn ranges(&self) -> Vec<SpanRange> {
        self.0.iter().map(EditSpan::range).collect()
    }

    pub fn into_inner(self) -> Vec<EditSpan> {
        self.0
    }

    /// Replaces every span of `source` by its replacement.
    pub fn apply(&self, source: &[String]) -> TokenSeq {
        let mut out = Vec::with_capacity(source.len());
        let mut pos = 0;
        for span in &self.0 {
            out.extend_from_slice(&source[pos..span.src_start]);
            out.extend_from_slice(&span.replacement);
            pos = span.src_end;
        }
        out.extend_from_slice(&source[pos.min(source.len())..]);
        TokenSeq(out)
    }
}

impl Deref for SpanList {
    type Target = [EditSpan];

    fn deref(&self) -> &[EditSpan] {
        &self.0
    }
}

/// Turns an alignment into edit spans.
///
/// Each maximal run of non-match operations becomes one span. A run made
/// only of insertions is anchored to the token before the insertion point
/// (or the token after it, at position 0) and that token is repeated in the
/// replacement. Runs that end up sharing an anchor are fused.
pub fn extract_edits(path: &AlignmentPath, source: &[String], target: &[String]) -> SpanList {
    debug_assert_eq!(path.src_len, source.len());
    debug_assert_eq!(path.tgt_len, target.len());
    let mut pieces: Vec<(Range<usize>, Range<usize>)> = Vec::new();
    for run in path.runs() {
        let (src, tgt) = if !run.src.is_empty() {
            (run.src, run.tgt)
        } else if run.src.start > 0 {
            // The op before the run is a match of (src - 1, tgt - 1).
            let s = run.src.start;
            (s - 1..s, run.tgt.start - 1..run.tgt.end)
        } else if !source.is_empty() {
            // The op after the run is a match of (0, tgt.end).
            (0..1, run.tgt.start..run.tgt.end + 1)
        } else {
            (0..0, run.tgt)
        };
        match pieces.last_mut() {
            Some((ps, pt)) if src.start < ps.end => {
                ps.end = ps.end.max(src.end);
                pt.end = pt.end.max(tgt.end);
            }
            _ => pieces.push((src, tgt)),
        }
    }
    SpanList(
        pieces
            .into_iter()
            .map(|(s, t)| EditSpan::new(s.start, s.end, TokenSeq(target[t].to_vec())))
            .collect(),
    )
}

/// Convenience: `extract_edits(align(source, target), ..)`.
pub fn edits_between(source: &[String], target: &[String]) -> SpanList {
    let path = align(source, target);
    extract_edits(&path, source, target)
}

/// Fuses consecutive spans separated by at most `max_gap` untouched source
/// tokens, copying those tokens into the fused replacement.
///
/// `max_gap == 0` leaves the list unchanged, including adjacent spans.
pub fn merge_edits(spans: &SpanList, source: &[String], max_gap: usize) -> SpanList {
    if max_gap == 0 {
        return spans.clone();
    }
    let mut out: Vec<EditSpan> = Vec::with_capacity(spans.len());
    for span in spans.iter() {
        match out.last_mut() {
            Some(prev) if span.src_start - prev.src_end <= max_gap => {
                let mut repl = std::mem::take(&mut prev.replacement).into_inner();
                repl.extend_from_slice(&source[prev.src_end..span.src_start]);
                repl.extend_from_slice(&span.replacement);
                prev.replacement = TokenSeq(repl);
                prev.src_end = span.src_end;
            }
            _ => out.push(span.clone()),
        }
    }
    SpanList(out)
}

/// Fuses ranges separated by at most `max_gap` tokens. `max_gap == 0` is
/// the identity.
pub fn merge_ranges(ranges: &[SpanRange], max_gap: usize) -> Vec<SpanRange> {
    if max_gap == 0 {
        return ranges.to_vec();
    }
    let mut out: Vec<SpanRange> = Vec::with_capacity(ranges.len());
    for &r in ranges {
        match out.last_mut() {
            Some(prev) if r.start - prev.end <= max_gap => prev.end = r.end,
            _ => out.push(r),
        }
    }
    out
}
