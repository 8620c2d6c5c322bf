//! Detection, correction and merging for whole sentences.
//!
//! Sentences without detected spans are passed through untouched and cost
//! no span decoding steps.

use thiserror::Error;

use crate::alignment::{edits_between, SpanRange, TokenSeq};
use crate::annotation::{annotate, merge_corrections, AnnotatedSentence, AnnotationError, MissingSpanPolicy};
use crate::batch;
use crate::esc::{count_full_decode_steps, CorrectionResult, Corrector, EscError};
use crate::esd::{decode_spans, DecodeConfig, TaggerModel};
use crate::eval::SentenceSteps;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sentence {sentence}: {source}")]
    Annotation {
        sentence: usize,
        #[source]
        source: AnnotationError,
    },
    #[error("sentence {sentence}: {source}")]
    Correction {
        sentence: usize,
        #[source]
        source: EscError,
    },
    #[error("{sources} sources but {golds} reference sentences")]
    CorpusMismatch { sources: usize, golds: usize },
}

pub trait Detector: Sync {
    fn detect(&self, tokens: &[String]) -> Vec<SpanRange>;
}

/// Thresholded tagger probabilities.
#[derive(Clone, Copy, Debug)]
pub struct TaggerDetector<'a> {
    pub model: &'a TaggerModel,
    pub decode: DecodeConfig,
}

impl Detector for TaggerDetector<'_> {
    fn detect(&self, tokens: &[String]) -> Vec<SpanRange> {
        decode_spans(&self.model.predict_probs(tokens), &self.decode)
    }
}

/// Reports the gold edit spans of one known sentence pair.
#[derive(Clone, Debug)]
pub struct OracleDetector {
    spans: Vec<SpanRange>,
}

impl OracleDetector {
    pub fn new(source: &TokenSeq, target: &TokenSeq) -> Self {
        OracleDetector {
            spans: edits_between(source, target).ranges(),
        }
    }
}

impl Detector for OracleDetector {
    fn detect(&self, _tokens: &[String]) -> Vec<SpanRange> {
        self.spans.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceOutcome {
    pub output: TokenSeq,
    pub annotated: AnnotatedSentence,
    pub correction: Option<CorrectionResult>,
    pub steps: SentenceSteps,
}

/// Runs one sentence. `reference` is the sentence a full decoder would
/// emit; when absent the pipeline output stands in for it.
pub fn run_sentence(
    index: usize,
    source: &TokenSeq,
    detector: &dyn Detector,
    corrector: &dyn Corrector,
    policy: MissingSpanPolicy,
    reference: Option<&TokenSeq>,
) -> Result<SentenceOutcome, PipelineError> {
    let spans = detector.detect(source);
    let annotated = annotate(source, &spans).map_err(|source| PipelineError::Annotation {
        sentence: index,
        source,
    })?;
    let (output, correction) = if annotated.has_spans() {
        let result = corrector
            .correct(&annotated)
            .map_err(|source| PipelineError::Correction {
                sentence: index,
                source,
            })?;
        let merged = merge_corrections(&annotated, &result.output, policy).map_err(|source| {
            PipelineError::Annotation {
                sentence: index,
                source,
            }
        })?;
        (merged, Some(result))
    } else {
        (source.clone(), None)
    };
    let steps = SentenceSteps {
        flagged: correction.is_some(),
        span_decode_steps: correction.as_ref().map_or(0, |c| c.decode_steps),
        full_decode_steps: count_full_decode_steps(reference.unwrap_or(&output)),
    };
    Ok(SentenceOutcome {
        output,
        annotated,
        correction,
        steps,
    })
}

/// Runs every sentence with shared models, in parallel when enabled.
pub fn run_corpus(
    sources: &[TokenSeq],
    references: Option<&[TokenSeq]>,
    detector: &dyn Detector,
    corrector: &dyn Corrector,
    policy: MissingSpanPolicy,
) -> Result<Vec<SentenceOutcome>, PipelineError> {
    if let Some(refs) = references {
        if refs.len() != sources.len() {
            return Err(PipelineError::CorpusMismatch {
                sources: sources.len(),
                golds: refs.len(),
            });
        }
    }
    batch::map(sources, |i, s| {
        run_sentence(i, s, detector, corrector, policy, references.map(|r| &r[i]))
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::tokenize;
    use crate::esc::OracleCorrector;
    use crate::esc::PhraseTable;

    #[test]
    fn error_free_sentence_passes_through() {
        let s = tokenize("a b c");
        let det = OracleDetector::new(&s, &s);
        let out = run_sentence(
            0,
            &s,
            &det,
            &PhraseTable::default(),
            MissingSpanPolicy::Copy,
            None,
        )
        .unwrap();
        assert_eq!(out.output, s);
        assert!(out.correction.is_none());
        assert_eq!(out.steps.span_decode_steps, 0);
        assert_eq!(out.steps.full_decode_steps, 4);
        assert!(!out.steps.flagged);
    }

    #[test]
    fn oracle_pair_reconstructs_target() {
        let s = tokenize("Could you show me the way for where is to my hotel .");
        let g = tokenize("Could you show me the way to where my hotel is .");
        let out = run_sentence(
            0,
            &s,
            &OracleDetector::new(&s, &g),
            &OracleCorrector::new(g.clone()),
            MissingSpanPolicy::Fail,
            Some(&g),
        )
        .unwrap();
        assert_eq!(out.output, g);
        assert!(out.steps.flagged);
        assert_eq!(out.steps.full_decode_steps, g.len() + 1);
    }

    #[test]
    fn corpus_length_mismatch() {
        let s = vec![tokenize("a")];
        let det = OracleDetector::new(&s[0], &s[0]);
        let err = run_corpus(
            &s,
            Some(&[]),
            &det,
            &PhraseTable::default(),
            MissingSpanPolicy::Copy,
        );
        assert!(matches!(err, Err(PipelineError::CorpusMismatch { .. })));
    }
}
