//! Precision, recall and F0.5 for detection and correction, and decoding
//! step accounting.

use std::collections::HashSet;
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{edits_between, EditSpan, TokenSeq};
use crate::batch;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("sentence {sentence}: {pred} predicted tags vs {gold} gold tags")]
    LengthMismatch {
        sentence: usize,
        pred: usize,
        gold: usize,
    },
    #[error("{pred} predicted sentences vs {gold} gold sentences")]
    CorpusMismatch { pred: usize, gold: usize },
}

/// `(1 + b^2) p r / (b^2 p + r)`, and 0 when both are 0. Works on either
/// the unit or the percent scale.
pub fn f_beta(p: f64, r: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * p + r;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / denom
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), Add::add)
    }
}

/// Micro-averaged scores on the unit scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f0_5: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl From<Counts> for Prf {
    fn from(c: Counts) -> Prf {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        Prf {
            precision,
            recall,
            f0_5: f_beta(precision, recall, 0.5),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
        }
    }
}

impl Prf {
    pub fn table_header() -> &'static str {
        "P\tR\tF0.5"
    }

    /// Percent scale, one decimal: `66.0\t24.7\t49.5`.
    pub fn table_row(&self) -> String {
        format!(
            "{:.1}\t{:.1}\t{:.1}",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f0_5
        )
    }
}

impl fmt::Display for Prf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\n{}", Prf::table_header(), self.table_row())
    }
}

pub fn tag_counts(pred: &[u8], gold: &[u8]) -> Counts {
    let mut c = Counts::default();
    for (&p, &g) in pred.iter().zip(gold) {
        match (p == 1, g == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// Token-level detection scores over a corpus.
pub fn detection_metrics<P, G>(pred: &[P], gold: &[G]) -> Result<Prf, EvalError>
where
    P: AsRef<[u8]> + Sync,
    G: AsRef<[u8]> + Sync,
{
    if pred.len() != gold.len() {
        return Err(EvalError::CorpusMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    if let Some(sentence) = (0..pred.len()).find(|&i| pred[i].as_ref().len() != gold[i].as_ref().len()) {
        return Err(EvalError::LengthMismatch {
            sentence,
            pred: pred[sentence].as_ref().len(),
            gold: gold[sentence].as_ref().len(),
        });
    }
    let counts: Counts = batch::map(pred, |i, p| tag_counts(p.as_ref(), gold[i].as_ref()))
        .into_iter()
        .sum();
    Ok(counts.into())
}

/// Exact `(start, end, replacement)` matches between hypothesis and gold
/// edits of one sentence.
pub fn edit_counts(source: &TokenSeq, hypothesis: &TokenSeq, gold: &TokenSeq) -> Counts {
    let hyp = edits_between(source, hypothesis);
    let gold = edits_between(source, gold);
    let gold_set: HashSet<&EditSpan> = gold.iter().collect();
    let tp = hyp.iter().filter(|e| gold_set.contains(e)).count() as u64;
    Counts {
        tp,
        fp: hyp.len() as u64 - tp,
        fn_: gold.len() as u64 - tp,
    }
}

/// One evaluated sentence for [`correction_metrics`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectionTriple {
    pub source: TokenSeq,
    pub hypothesis: TokenSeq,
    pub gold: TokenSeq,
}

/// Edit-level correction scores against a single reference.
pub fn correction_metrics(triples: &[CorrectionTriple]) -> Prf {
    batch::map(triples, |_, t| edit_counts(&t.source, &t.hypothesis, &t.gold))
        .into_iter()
        .sum::<Counts>()
        .into()
}

/// Decoding cost of one processed sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSteps {
    pub flagged: bool,
    pub span_decode_steps: usize,
    pub full_decode_steps: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub n_sentences: usize,
    pub n_flagged: usize,
    pub span_decode_steps: usize,
    pub full_decode_steps: usize,
    /// Full-decode steps over flagged sentences only.
    pub flagged_full_decode_steps: usize,
    pub ratio: f64,
}

pub fn efficiency_report(run: &[SentenceSteps]) -> EfficiencyReport {
    let mut r = EfficiencyReport {
        n_sentences: run.len(),
        ..EfficiencyReport::default()
    };
    for s in run {
        r.span_decode_steps += s.span_decode_steps;
        r.full_decode_steps += s.full_decode_steps;
        if s.flagged {
            r.n_flagged += 1;
            r.flagged_full_decode_steps += s.full_decode_steps;
        }
    }
    r.ratio = if r.full_decode_steps > 0 {
        r.span_decode_steps as f64 / r.full_decode_steps as f64
    } else {
        0.0
    };
    r
}
