//! Training data for both stages.
//!
//! Detector instances tag every source token inside a gold edit with 1.
//! Corrector instances pair an annotated source with the text each span
//! should become, either for the gold spans or for randomly sampled ones;
//! sampled spans that contain no edit teach the corrector to copy.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{align, extract_edits, project_with_owners, SpanRange, TokenSeq};
use crate::annotation::{annotate, AnnotatedSentence, AnnotationError, CorrectionOutput};
use crate::batch;

pub type SeededRng = ChaCha8Rng;

/// Per-sentence generator derived from a corpus seed.
pub fn sentence_rng(seed: u64, index: usize) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed ^ index as u64)
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{name} must be in {range}, got {value}")]
    OutOfRange {
        name: &'static str,
        range: &'static str,
        value: f64,
    },
    #[error("corruption probabilities sum to {0}, more than 1")]
    ProbabilitySum(f64),
    #[error("insert/replace probabilities are positive but the vocabulary is empty")]
    EmptyVocab,
}

fn check(name: &'static str, range: &'static str, value: f64, ok: bool) -> Result<(), ConfigError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange { name, range, value })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EsdInstance {
    pub tokens: TokenSeq,
    pub tags: Vec<u8>,
}

impl EsdInstance {
    pub fn positives(&self) -> usize {
        self.tags.iter().filter(|&&t| t == 1).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EscInstance {
    pub annotated: AnnotatedSentence,
    pub correction: CorrectionOutput,
}

/// Tags 1 on every source token covered by a gold edit.
pub fn make_esd_instance(source: &TokenSeq, target: &TokenSeq) -> EsdInstance {
    let path = align(source, target);
    let edits = extract_edits(&path, source, target);
    let mut tags = vec![0u8; source.len()];
    for span in edits.iter() {
        tags[span.src_start..span.src_end].fill(1);
    }
    EsdInstance {
        tokens: source.clone(),
        tags,
    }
}

/// Annotates the gold edits of `(source, target)`.
pub fn make_esc_gold(source: &TokenSeq, target: &TokenSeq) -> Result<EscInstance, AnnotationError> {
    let path = align(source, target);
    let edits = extract_edits(&path, source, target);
    let annotated = annotate(source, &edits.ranges())?;
    let correction = CorrectionOutput::new(
        edits
            .into_inner()
            .into_iter()
            .enumerate()
            .map(|(i, e)| (i + 1, e.replacement))
            .collect(),
    );
    Ok(EscInstance {
        annotated,
        correction,
    })
}

/// Annotates arbitrary `ranges` of `source`; each span's correction is the
/// part of `target` aligned to it.
pub fn make_esc_for_ranges(
    source: &TokenSeq,
    target: &TokenSeq,
    ranges: &[SpanRange],
) -> Result<EscInstance, AnnotationError> {
    let annotated = annotate(source, ranges)?;
    let path = align(source, target);
    let owners = path.target_owners();
    let segments = ranges
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let t = if source.is_empty() {
                0..target.len()
            } else {
                project_with_owners(&owners, r.start, r.end)
            };
            (i + 1, TokenSeq::new(target[t].to_vec()))
        })
        .collect();
    Ok(EscInstance {
        annotated,
        correction: CorrectionOutput::new(segments),
    })
}

/// Random span sampling parameters. Span lengths follow a geometric law
/// clipped at `max_span_len`; sampling stops once `coverage_budget` of the
/// sentence is covered.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanSampleConfig {
    pub geometric_p: f64,
    pub max_span_len: usize,
    pub coverage_budget: f64,
}

impl Default for SpanSampleConfig {
    fn default() -> Self {
        SpanSampleConfig {
            geometric_p: 0.2,
            max_span_len: 10,
            coverage_budget: 0.15,
        }
    }
}

impl SpanSampleConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.geometric_p;
        check("geometric_p", "(0, 1]", p, p > 0.0 && p <= 1.0)?;
        let m = self.max_span_len as f64;
        check("max_span_len", ">= 1", m, self.max_span_len >= 1)?;
        let b = self.coverage_budget;
        check("coverage_budget", "[0, 1)", b, (0.0..1.0).contains(&b))
    }
}

const MAX_REJECTIONS: usize = 50;

/// Samples non-overlapping spans until the coverage budget is met or 50
/// candidates have been rejected for overlapping.
pub fn sample_spans<R: Rng + ?Sized>(
    tokens: &[String],
    cfg: &SpanSampleConfig,
    rng: &mut R,
) -> Vec<SpanRange> {
    let n = tokens.len();
    if n == 0 {
        return Vec::new();
    }
    let geometric = Geometric::new(cfg.geometric_p.clamp(f64::MIN_POSITIVE, 1.0))
        .expect("geometric_p validated to (0, 1]");
    let budget = cfg.coverage_budget * n as f64;
    let mut covered = vec![false; n];
    let mut count = 0usize;
    let mut spans = Vec::new();
    let mut rejections = 0;
    while (count as f64) < budget && rejections < MAX_REJECTIONS {
        let extra = geometric.sample(rng).min(u64::MAX - 1) as usize;
        let len = extra.saturating_add(1).min(cfg.max_span_len.max(1)).min(n);
        let start = rng.random_range(0..=n - len);
        if covered[start..start + len].iter().any(|&c| c) {
            rejections += 1;
            continue;
        }
        covered[start..start + len].fill(true);
        count += len;
        spans.push(SpanRange::new(start, start + len));
    }
    spans.sort();
    spans
}

/// A corrector instance over sampled spans of `source`.
pub fn make_esc_sampled<R: Rng + ?Sized>(
    source: &TokenSeq,
    target: &TokenSeq,
    cfg: &SpanSampleConfig,
    rng: &mut R,
) -> Result<EscInstance, AnnotationError> {
    let ranges = sample_spans(source, cfg, rng);
    make_esc_for_ranges(source, target, &ranges)
}

/// Sampled spans with probability `sampled_ratio`, gold spans otherwise.
/// Empty sources always use gold spans. The flag reports which was used.
pub fn make_esc_mixed<R: Rng + ?Sized>(
    source: &TokenSeq,
    target: &TokenSeq,
    cfg: &SpanSampleConfig,
    sampled_ratio: f64,
    rng: &mut R,
) -> Result<(EscInstance, bool), AnnotationError> {
    let sampled = rng.random::<f64>() < sampled_ratio && !source.is_empty();
    let inst = if sampled {
        make_esc_sampled(source, target, cfg, rng)?
    } else {
        make_esc_gold(source, target)?
    };
    Ok((inst, sampled))
}

/// Token-level noise model: for each position one draw picks insert-after,
/// delete, replace, swap-with-next or keep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptConfig {
    pub p_insert: f64,
    pub p_delete: f64,
    pub p_replace: f64,
    pub p_swap: f64,
    pub vocab: Vec<String>,
    pub seed: u64,
}

impl CorruptConfig {
    /// Splits `error_rate` evenly over the four operations.
    pub fn with_error_rate(error_rate: f64, vocab: Vec<String>, seed: u64) -> Self {
        let p = error_rate / 4.0;
        CorruptConfig {
            p_insert: p,
            p_delete: p,
            p_replace: p,
            p_swap: p,
            vocab,
            seed,
        }
    }

    pub fn none() -> Self {
        CorruptConfig::with_error_rate(0.0, Vec::new(), 0)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, p) in [
            ("p_insert", self.p_insert),
            ("p_delete", self.p_delete),
            ("p_replace", self.p_replace),
            ("p_swap", self.p_swap),
        ] {
            check(name, "[0, 1]", p, (0.0..=1.0).contains(&p))?;
        }
        let sum = self.p_insert + self.p_delete + self.p_replace + self.p_swap;
        if sum > 1.0 + 1e-12 {
            return Err(ConfigError::ProbabilitySum(sum));
        }
        if self.vocab.is_empty() && (self.p_insert > 0.0 || self.p_replace > 0.0) {
            return Err(ConfigError::EmptyVocab);
        }
        Ok(())
    }
}

/// Applies random token noise to `sentence`. Deterministic given `rng`.
pub fn corrupt<R: Rng + ?Sized>(sentence: &[String], cfg: &CorruptConfig, rng: &mut R) -> TokenSeq {
    let n = sentence.len();
    let mut out = Vec::with_capacity(n + n / 4 + 1);
    let insert_cut = cfg.p_insert;
    let delete_cut = insert_cut + cfg.p_delete;
    let replace_cut = delete_cut + cfg.p_replace;
    let swap_cut = replace_cut + cfg.p_swap;
    let draw = |rng: &mut R, vocab: &[String]| vocab[rng.random_range(0..vocab.len())].clone();
    let mut i = 0;
    while i < n {
        let u: f64 = rng.random();
        if u < insert_cut {
            out.push(sentence[i].clone());
            if !cfg.vocab.is_empty() {
                out.push(draw(rng, &cfg.vocab));
            }
        } else if u < delete_cut {
        } else if u < replace_cut {
            if cfg.vocab.is_empty() {
                out.push(sentence[i].clone());
            } else {
                out.push(draw(rng, &cfg.vocab));
            }
        } else if u < swap_cut && i + 1 < n {
            out.push(sentence[i + 1].clone());
            out.push(sentence[i].clone());
            i += 1;
        } else {
            out.push(sentence[i].clone());
        }
        i += 1;
    }
    TokenSeq::new(out)
}

/// Corrupts every sentence of `clean`; sentence `i` uses the generator
/// `cfg.seed ^ i`. Returns `(corrupted, clean)` pairs in input order.
pub fn corrupt_corpus(clean: &[TokenSeq], cfg: &CorruptConfig) -> Vec<(TokenSeq, TokenSeq)> {
    batch::map(clean, |i, s| {
        (corrupt(s, cfg, &mut sentence_rng(cfg.seed, i)), s.clone())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{edits_between, tokenize};
    use crate::annotation::{merge_corrections, MissingSpanPolicy};

    fn t(s: &str) -> TokenSeq {
        tokenize(s)
    }

    #[test]
    fn esd_tags_identity_and_substitution() {
        let s = t("a b c");
        assert_eq!(make_esd_instance(&s, &s).tags, vec![0, 0, 0]);
        assert_eq!(make_esd_instance(&s, &t("a x c")).tags, vec![0, 1, 0]);
        assert_eq!(
            make_esd_instance(&TokenSeq::empty(), &t("a")).tags,
            Vec::<u8>::new()
        );
    }

    #[test]
    fn esd_tags_on_hotel_pair() {
        let s = t("Could you show me the way for where is to my hotel .");
        let g = t("Could you show me the way to where my hotel is .");
        let inst = make_esd_instance(&s, &g);
        let ones: Vec<usize> = (0..s.len()).filter(|&i| inst.tags[i] == 1).collect();
        assert!(ones.contains(&6), "'for' must be tagged");
        assert!(ones.iter().all(|&i| i == 6 || (8..13).contains(&i)), "{ones:?}");
        assert!(ones.iter().any(|&i| i >= 8));
    }

    #[test]
    fn esc_gold_law_example() {
        let s = t("The law 's spirit also include the fairness .");
        let g = t("The law 's spirit also includes fairness .");
        let inst = make_esc_gold(&s, &g).unwrap();
        assert_eq!(inst.annotated.spans.len(), 1);
        let out = merge_corrections(&inst.annotated, &inst.correction, MissingSpanPolicy::Fail).unwrap();
        assert_eq!(out, g);
        let ident = make_esc_gold(&s, &s).unwrap();
        assert!(ident.annotated.spans.is_empty() && ident.correction.is_empty());
    }

    #[test]
    fn injected_gold_ranges_reproduce_gold_instance() {
        let pairs = [
            ("x a b c d", "a B c q d e"),
            ("a", "x a y"),
            ("b c", "a b c"),
            ("a b c d e f", "a c b d f e g"),
        ];
        for (s, g) in pairs {
            let (s, g) = (t(s), t(g));
            let gold = make_esc_gold(&s, &g).unwrap();
            let ranges = edits_between(&s, &g).ranges();
            assert_eq!(make_esc_for_ranges(&s, &g, &ranges).unwrap(), gold);
        }
    }

    #[test]
    fn sampled_copy_span_replacement_is_source() {
        let s = t("a b c d e");
        let g = t("a b X d e");
        let inst = make_esc_for_ranges(&s, &g, &[SpanRange::new(0, 2)]).unwrap();
        assert_eq!(inst.correction.get(1), Some(&t("a b")));
        let inst = make_esc_for_ranges(&s, &g, &[SpanRange::new(2, 3)]).unwrap();
        assert_eq!(inst.correction.get(1), Some(&t("X")));
    }

    #[test]
    fn sample_spans_bounds() {
        let cfg0 = SpanSampleConfig {
            coverage_budget: 0.0,
            ..SpanSampleConfig::default()
        };
        let mut rng = sentence_rng(1, 0);
        assert!(sample_spans(&t("a b c d"), &cfg0, &mut rng).is_empty());
        let one = sample_spans(&t("a"), &SpanSampleConfig::default(), &mut rng);
        assert_eq!(one, vec![SpanRange::new(0, 1)]);
        assert!(sample_spans(&TokenSeq::empty(), &SpanSampleConfig::default(), &mut rng).is_empty());
    }

    #[test]
    fn sample_spans_golden() {
        let tokens: TokenSeq = (0..20).map(|i| format!("w{i}")).collect();
        let cfg = SpanSampleConfig::default();
        let mut rng = SeededRng::seed_from_u64(42);
        let spans = sample_spans(&tokens, &cfg, &mut rng);
        let mut rng = SeededRng::seed_from_u64(42);
        assert_eq!(spans, sample_spans(&tokens, &cfg, &mut rng));
        let covered: usize = spans.iter().map(SpanRange::len).sum();
        assert!(covered >= 3);
        assert_eq!(
            spans,
            GOLDEN_SPANS
                .iter()
                .map(|&(s, e)| SpanRange::new(s, e))
                .collect::<Vec<_>>()
        );
    }

    // Recorded from the seeded generator.
    const GOLDEN_SPANS: &[(usize, usize)] = &[(6, 7), (10, 11), (13, 15)];

    #[test]
    fn corrupt_degenerate_configs() {
        let s = t("a b c");
        let mut rng = sentence_rng(0, 0);
        assert_eq!(corrupt(&s, &CorruptConfig::none(), &mut rng), s);
        let del = CorruptConfig {
            p_delete: 1.0,
            ..CorruptConfig::none()
        };
        assert!(corrupt(&s, &del, &mut rng).is_empty());
        let swap = CorruptConfig {
            p_swap: 1.0,
            ..CorruptConfig::none()
        };
        assert_eq!(corrupt(&t("a b c"), &swap, &mut rng), t("b a c"));
    }

    #[test]
    fn corrupt_golden() {
        let s = t("the quick brown fox jumps over the lazy dog .");
        let vocab: Vec<String> = ["cat", "ran", "a", "blue"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let cfg = CorruptConfig::with_error_rate(0.6, vocab, 7);
        let mut rng = SeededRng::seed_from_u64(cfg.seed);
        let out = corrupt(&s, &cfg, &mut rng);
        assert_eq!(out.join(), GOLDEN_CORRUPT);
    }

    const GOLDEN_CORRUPT: &str = "brown fox jumps cat ran dog";

    #[test]
    fn config_validation() {
        assert!(SpanSampleConfig::default().validate().is_ok());
        let bad = SpanSampleConfig {
            geometric_p: 0.0,
            ..SpanSampleConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = CorruptConfig::with_error_rate(0.1, Vec::new(), 0);
        assert_eq!(bad.validate(), Err(ConfigError::EmptyVocab));
        let bad = CorruptConfig {
            p_delete: 0.6,
            p_swap: 0.6,
            ..CorruptConfig::none()
        };
        assert!(matches!(bad.validate(), Err(ConfigError::ProbabilitySum(_))));
    }
}
