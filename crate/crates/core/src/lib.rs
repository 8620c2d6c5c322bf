//! Two-stage grammatical error correction: detect erroneous spans with a
//! token tagger, then rewrite only those spans.
//!
//! - [`alignment`]: Levenshtein token alignment and edit spans.
//! - [`annotation`]: `<sK>` span markers, corrector output parsing, merging.
//! - [`datagen`]: detector and corrector training instances, noise.
//! - [`esd`]: averaged-perceptron detector and threshold decoding.
//! - [`esc`]: span correctors and decoding-step accounting.
//! - [`eval`]: P/R/F0.5 and efficiency reports.
//! - [`pipeline`]: detection, correction and merging of whole sentences.

pub mod alignment;
pub mod annotation;
pub mod batch;
pub mod datagen;
pub mod esc;
pub mod esd;
pub mod eval;
pub mod pipeline;
pub mod synth;

pub use alignment::{align, extract_edits, merge_edits, tokenize, EditSpan, SpanList, SpanRange, TokenSeq};
pub use annotation::{
    annotate, merge_corrections, parse_annotation, parse_correction, AnnotatedSentence, CorrectionOutput,
};
pub use esc::{CorrectionResult, Corrector, OracleCorrector, PhraseTable};
pub use esd::{decode_spans, train_tagger, DecodeConfig, TaggerModel, TokenProbs};
pub use eval::{f_beta, EfficiencyReport, Prf};
