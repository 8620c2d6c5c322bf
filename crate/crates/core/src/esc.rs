//! Erroneous span correction.
//!
//! A corrector reads an annotated sentence and emits `<sK> .. </sK>` for
//! each span, nothing else. The number of tokens it emits is the decoding
//! cost of the stage. Two correctors ship here: a phrase table that
//! memorizes span rewrites seen in training, and an oracle that answers
//! from a known target sentence.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{align, project_with_owners, tokenize, TokenSeq};
use crate::annotation::{AnnotatedSentence, CorrectionOutput};
use crate::datagen::EscInstance;

#[derive(Debug, Error)]
pub enum EscError {
    #[error("no training instances")]
    EmptyCorpus,
    #[error("sentence has no annotated spans; error-free sentences skip correction")]
    NoSpans,
    #[error("phrase table line {line}: {source}")]
    BadRecord {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A corrector's output together with its decoding cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectionResult {
    pub output: CorrectionOutput,
    /// Emitted tokens, markers included.
    pub decode_steps: usize,
}

impl CorrectionResult {
    pub fn new(output: CorrectionOutput) -> Self {
        let decode_steps = output.segments().iter().map(|(_, r)| r.len() + 2).sum();
        CorrectionResult { output, decode_steps }
    }
}

pub trait Corrector: Sync {
    fn correct(&self, annotated: &AnnotatedSentence) -> Result<CorrectionResult, EscError>;
}

/// Steps a whole-sentence decoder would take: every token plus end of
/// sequence.
pub fn count_full_decode_steps(target: &[String]) -> usize {
    target.len() + 1
}

/// Gold answer of a training instance.
pub fn oracle_correct(instance: &EscInstance) -> CorrectionResult {
    CorrectionResult::new(instance.correction.clone())
}

/// Answers each span with the part of a known target aligned to it.
#[derive(Clone, Debug)]
pub struct OracleCorrector {
    target: TokenSeq,
}

impl OracleCorrector {
    pub fn new(target: TokenSeq) -> Self {
        OracleCorrector { target }
    }
}

impl Corrector for OracleCorrector {
    fn correct(&self, annotated: &AnnotatedSentence) -> Result<CorrectionResult, EscError> {
        if annotated.spans.is_empty() {
            return Err(EscError::NoSpans);
        }
        let source = &annotated.source;
        let path = align(source, &self.target);
        let owners = path.target_owners();
        let segments = annotated
            .spans
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let t = if source.is_empty() {
                    0..self.target.len()
                } else {
                    project_with_owners(&owners, r.start, r.end)
                };
                (i + 1, TokenSeq::new(self.target[t].to_vec()))
            })
            .collect();
        Ok(CorrectionResult::new(CorrectionOutput::new(segments)))
    }
}

/// Context key of the phrase table: the token left of the span (empty at
/// sentence start), or `None` for the context-free backoff entry.
type Key = (Option<String>, String);

/// One line of the phrase-table JSONL file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseRecord {
    pub ctx: Option<String>,
    pub span: String,
    pub repl: String,
    pub count: u64,
}

/// Memorized span rewrites with counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhraseTable {
    counts: BTreeMap<Key, BTreeMap<String, u64>>,
    best: HashMap<Key, TokenSeq>,
    /// Kept for parity with beam-search correctors; lookups ignore it.
    pub beam_size: usize,
}

fn left_context(annotated: &AnnotatedSentence, k: usize) -> String {
    let start = annotated.spans[k].start;
    if start == 0 {
        String::new()
    } else {
        annotated.source[start - 1].clone()
    }
}

impl PhraseTable {
    fn from_counts(counts: BTreeMap<Key, BTreeMap<String, u64>>) -> Self {
        let best = counts
            .iter()
            .map(|(key, cands)| {
                // Highest count; BTreeMap order makes the smallest string win ties.
                let (repl, _) = cands
                    .iter()
                    .fold(None::<(&String, u64)>, |acc, (r, &c)| match acc {
                        Some((_, bc)) if bc >= c => acc,
                        _ => Some((r, c)),
                    })
                    .expect("candidate maps are never empty");
                (key.clone(), tokenize(repl))
            })
            .collect();
        PhraseTable {
            counts,
            best,
            beam_size: 5,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Best rewrite for `span` after `ctx`, backing off to the span alone.
    pub fn lookup(&self, ctx: &str, span: &[String]) -> Option<&TokenSeq> {
        let span = span.join(" ");
        self.best
            .get(&(Some(ctx.to_string()), span.clone()))
            .or_else(|| self.best.get(&(None, span)))
    }

    pub fn records(&self) -> impl Iterator<Item = PhraseRecord> + '_ {
        self.counts.iter().flat_map(|((ctx, span), cands)| {
            cands.iter().map(move |(repl, &count)| PhraseRecord {
                ctx: ctx.clone(),
                span: span.clone(),
                repl: repl.clone(),
                count,
            })
        })
    }

    pub fn from_records<I: IntoIterator<Item = PhraseRecord>>(records: I) -> Self {
        let mut counts: BTreeMap<Key, BTreeMap<String, u64>> = BTreeMap::new();
        for r in records {
            *counts
                .entry((r.ctx, r.span))
                .or_default()
                .entry(r.repl)
                .or_default() += r.count;
        }
        PhraseTable::from_counts(counts)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for rec in self.records() {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, EscError> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec =
                serde_json::from_str(&line).map_err(|source| EscError::BadRecord { line: i + 1, source })?;
            records.push(rec);
        }
        Ok(PhraseTable::from_records(records))
    }
}

/// Counts every gold span rewrite, keyed with and without left context.
pub fn train_corrector(instances: &[EscInstance]) -> Result<PhraseTable, EscError> {
    if instances.is_empty() {
        return Err(EscError::EmptyCorpus);
    }
    let mut counts: BTreeMap<Key, BTreeMap<String, u64>> = BTreeMap::new();
    for inst in instances {
        for k in 0..inst.annotated.spans.len() {
            let Some(repl) = inst.correction.get(k + 1) else {
                continue;
            };
            let span = inst.annotated.span_tokens(k).join(" ");
            let repl = repl.join();
            let ctx = left_context(&inst.annotated, k);
            for key in [(Some(ctx), span.clone()), (None, span)] {
                *counts.entry(key).or_default().entry(repl.clone()).or_default() += 1;
            }
        }
    }
    log::info!("phrase table has {} keys", counts.len());
    Ok(PhraseTable::from_counts(counts))
}

impl Corrector for PhraseTable {
    fn correct(&self, annotated: &AnnotatedSentence) -> Result<CorrectionResult, EscError> {
        if annotated.spans.is_empty() {
            return Err(EscError::NoSpans);
        }
        let segments = (0..annotated.spans.len())
            .map(|k| {
                let span = annotated.span_tokens(k);
                let repl = self
                    .lookup(&left_context(annotated, k), span)
                    .cloned()
                    .unwrap_or_else(|| TokenSeq::new(span.to_vec()));
                (k + 1, repl)
            })
            .collect();
        Ok(CorrectionResult::new(CorrectionOutput::new(segments)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::SpanRange;
    use crate::annotation::{annotate, merge_corrections, MissingSpanPolicy};
    use crate::datagen::make_esc_gold;

    fn t(s: &str) -> TokenSeq {
        tokenize(s)
    }

    const LAW: &str = "The law 's spirit also include the fairness .";
    const LAW_FIXED: &str = "The law 's spirit also includes fairness .";

    fn law_instance() -> EscInstance {
        make_esc_gold(&t(LAW), &t(LAW_FIXED)).unwrap()
    }

    #[test]
    fn memorizes_most_frequent_rewrite() {
        let mut data = vec![law_instance(); 3];
        data.push(make_esc_gold(&t(LAW), &t("The law 's spirit also included the fairness .")).unwrap());
        let table = train_corrector(&data).unwrap();
        let annotated = law_instance().annotated;
        let res = table.correct(&annotated).unwrap();
        let merged = merge_corrections(&annotated, &res.output, MissingSpanPolicy::Fail).unwrap();
        assert_eq!(merged, t(LAW_FIXED));
    }

    #[test]
    fn law_correction_steps() {
        let table = train_corrector(&[law_instance()]).unwrap();
        let annotated = annotate(&t(LAW), &[SpanRange::new(4, 9)]).unwrap();
        let res = table.correct(&annotated).unwrap();
        // Our alignment yields a narrower gold span, so the wide Table-style
        // span backs off to copying.
        assert_eq!(res.output.render().len(), res.decode_steps);

        let wide = EscInstance {
            annotated: annotated.clone(),
            correction: CorrectionOutput::new(vec![(1, t("also includes fairness ."))]),
        };
        let table = train_corrector(&[wide]).unwrap();
        let res = table.correct(&annotated).unwrap();
        assert_eq!(res.output.render().join(), "<s1> also includes fairness . </s1>");
        assert_eq!(res.decode_steps, 6);
    }

    #[test]
    fn ties_break_lexicographically() {
        let a = make_esc_gold(&t("x b"), &t("x c")).unwrap();
        let b = make_esc_gold(&t("x b"), &t("x a")).unwrap();
        let table = train_corrector(&[a, b]).unwrap();
        assert_eq!(table.lookup("x", &t("b")), Some(&t("a")));
    }

    #[test]
    fn context_then_backoff() {
        let a = make_esc_gold(&t("p b"), &t("p c")).unwrap();
        let b = make_esc_gold(&t("q b"), &t("q d")).unwrap();
        let c = make_esc_gold(&t("q b"), &t("q d")).unwrap();
        let table = train_corrector(&[a, b, c]).unwrap();
        assert_eq!(table.lookup("p", &t("b")), Some(&t("c")));
        assert_eq!(table.lookup("q", &t("b")), Some(&t("d")));
        assert_eq!(table.lookup("z", &t("b")), Some(&t("d")));
        assert_eq!(table.lookup("z", &t("zz")), None);
    }

    #[test]
    fn unseen_span_copies() {
        let table = train_corrector(&[law_instance()]).unwrap();
        let annotated = annotate(&t("a b c"), &[SpanRange::new(1, 2)]).unwrap();
        let res = table.correct(&annotated).unwrap();
        assert_eq!(res.output.get(1), Some(&t("b")));
        assert_eq!(res.decode_steps, 3);
    }

    #[test]
    fn zero_spans_rejected_and_empty_corpus() {
        let table = train_corrector(&[law_instance()]).unwrap();
        let annotated = annotate(&t("a b"), &[]).unwrap();
        assert!(matches!(table.correct(&annotated), Err(EscError::NoSpans)));
        assert!(matches!(train_corrector(&[]), Err(EscError::EmptyCorpus)));
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let data = vec![law_instance(), make_esc_gold(&t("a b c"), &t("a c")).unwrap()];
        let a = train_corrector(&data).unwrap();
        let b = train_corrector(&data).unwrap();
        let (mut ja, mut jb) = (Vec::new(), Vec::new());
        a.write_jsonl(&mut ja).unwrap();
        b.write_jsonl(&mut jb).unwrap();
        assert_eq!(ja, jb);
        let back = PhraseTable::read_jsonl(&ja[..]).unwrap();
        assert_eq!(back, a);
        let first = String::from_utf8(ja).unwrap();
        let first = first.lines().next().unwrap();
        let rec: serde_json::Value = serde_json::from_str(first).unwrap();
        assert!(rec.get("ctx").is_some() && rec.get("count").is_some());
    }

    #[test]
    fn bad_phrase_record_reports_line() {
        let input = b"{\"ctx\":null,\"span\":\"a\",\"repl\":\"b\",\"count\":1}\nnot json\n";
        match PhraseTable::read_jsonl(&input[..]) {
            Err(EscError::BadRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oracle_examples() {
        let src = t("Could you show me the way for where is to my hotel .");
        let gold = t("Could you show me the way to where my hotel is .");
        let annotated = annotate(&src, &[SpanRange::new(6, 7), SpanRange::new(8, 13)]).unwrap();
        let res = OracleCorrector::new(gold.clone()).correct(&annotated).unwrap();
        assert_eq!(
            res.output.render().join(),
            "<s1> to </s1> <s2> my hotel is . </s2>"
        );
        assert_eq!(res.decode_steps, 9);
        let merged = merge_corrections(&annotated, &res.output, MissingSpanPolicy::Fail).unwrap();
        assert_eq!(merged, gold);

        let del = make_esc_gold(&t("a b c"), &t("a c")).unwrap();
        let res = oracle_correct(&del);
        let merged = merge_corrections(&del.annotated, &res.output, MissingSpanPolicy::Fail).unwrap();
        assert_eq!(merged, t("a c"));
    }

    #[test]
    fn full_decode_steps() {
        assert_eq!(count_full_decode_steps(&[]), 1);
        let ten: TokenSeq = (0..10).map(|i| i.to_string()).collect();
        assert_eq!(count_full_decode_steps(&ten), 11);
    }
}
