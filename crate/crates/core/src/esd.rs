//! Erroneous span detection: a binary token tagger and span decoding.
//!
//! The tagger is an averaged perceptron over hashed window features. Its
//! margin is squashed through a logistic with a temperature fitted on a
//! held-out slice of the training data, giving per-token error
//! probabilities. Spans are maximal runs of tokens whose probability reaches
//! the decoding threshold; raising the threshold trades recall for
//! precision.

use std::io::{self, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use thiserror::Error;

use crate::alignment::{merge_ranges, SpanRange};
use crate::datagen::{EsdInstance, SeededRng};

/// Version of the feature templates; bumped whenever extraction changes.
pub const TEMPLATE_VERSION: u32 = 1;
pub const HASH_BITS: u32 = 20;
pub const BUCKETS: usize = 1 << HASH_BITS;
const MAGIC: &[u8; 4] = b"ESD1";
const TEMPERATURE_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
const HASH_MULTIPLIER: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum EsdError {
    #[error("no training instances")]
    EmptyCorpus,
    #[error("instance {index} has {tokens} tokens but {tags} tags")]
    LengthMismatch {
        index: usize,
        tokens: usize,
        tags: usize,
    },
    #[error("instance {index} has tag {tag}; tags must be 0 or 1")]
    BadTag { index: usize, tag: u8 },
    #[error("not a detector model file")]
    BadMagic,
    #[error("model uses feature templates v{found}, this build expects v{expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model has {found} hash buckets, this build expects {expected}")]
    BucketMismatch { found: u32, expected: u32 },
    #[error("weight record {0} is out of range or out of order")]
    BadRecord(u64),
    #[error("model file is truncated or has trailing bytes")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn fnv1a(parts: &[&str], template: u8) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    eat(template);
    for part in parts {
        // 0xFF never occurs in UTF-8, so parts cannot run into each other.
        eat(0xFF);
        for &b in part.as_bytes() {
            eat(b);
        }
    }
    h
}

fn bucket(parts: &[&str], template: u8) -> u32 {
    (fnv1a(parts, template).wrapping_mul(HASH_MULTIPLIER) >> (64 - HASH_BITS)) as u32
}

fn shape(token: &str) -> String {
    let mut out = String::new();
    let mut last = None;
    for c in token.chars() {
        let class = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else if c.is_alphabetic() {
            'a'
        } else {
            c
        };
        if last != Some(class) {
            out.push(class);
            last = Some(class);
        }
    }
    out
}

fn char_prefix(token: &str, n: usize) -> Option<&str> {
    let (idx, _) = token.char_indices().nth(n)?;
    Some(&token[..idx])
}

fn char_suffix(token: &str, n: usize) -> Option<&str> {
    let count = token.chars().count();
    if count <= n {
        return None;
    }
    let (idx, _) = token.char_indices().nth(count - n)?;
    Some(&token[idx..])
}

const BOS2: &str = "<bos2>";
const BOS: &str = "<bos>";
const EOS: &str = "<eos>";
const EOS2: &str = "<eos2>";

/// Hashed feature ids for every token of a sentence.
pub fn sentence_features(tokens: &[String]) -> Vec<Vec<u32>> {
    let n = tokens.len();
    let at = |i: isize| -> &str {
        match i {
            -2 => BOS2,
            -1 => BOS,
            i if i as usize == n => EOS,
            i if i as usize > n => EOS2,
            i => &tokens[i as usize],
        }
    };
    (0..n)
        .map(|i| {
            let i = i as isize;
            let w = at(i);
            let (p2, p1, n1, n2) = (at(i - 2), at(i - 1), at(i + 1), at(i + 2));
            let lower = w.to_lowercase();
            let shp = shape(w);
            let mut f = Vec::with_capacity(20);
            f.push(bucket(&[], 0));
            f.push(bucket(&[w], 1));
            f.push(bucket(&[&lower], 2));
            for k in 1..=3 {
                if let Some(p) = char_prefix(w, k) {
                    f.push(bucket(&[p], 2 + k as u8));
                }
                if let Some(s) = char_suffix(w, k) {
                    f.push(bucket(&[s], 5 + k as u8));
                }
            }
            f.push(bucket(&[&shp], 9));
            f.push(bucket(&[p2], 10));
            f.push(bucket(&[p1], 11));
            f.push(bucket(&[n1], 12));
            f.push(bucket(&[n2], 13));
            f.push(bucket(&[p1, w], 14));
            f.push(bucket(&[w, n1], 15));
            f.push(bucket(&[p1, n1], 16));
            f.push(bucket(&[p2, p1], 17));
            f.push(bucket(&[n1, n2], 18));
            f.push(bucket(&[p2, w], 19));
            f.push(bucket(&[w, n2], 20));
            f
        })
        .collect()
}

/// Per-token error probabilities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TokenProbs(pub Vec<f64>);

impl TokenProbs {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodeConfig {
    pub threshold: f64,
    pub merge_gap: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            threshold: 0.5,
            merge_gap: 0,
        }
    }
}

/// Maximal runs of tokens with probability `>= threshold`, then fused
/// across gaps of at most `merge_gap` tokens. An empty result means the
/// sentence is considered error-free.
pub fn decode_spans(probs: &TokenProbs, cfg: &DecodeConfig) -> Vec<SpanRange> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &p) in probs.0.iter().enumerate() {
        match (p >= cfg.threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push(SpanRange::new(s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(SpanRange::new(s, probs.len()));
    }
    merge_ranges(&runs, cfg.merge_gap)
}

/// Trained detector. Weights are the averaged perceptron weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggerModel {
    weights: Vec<f64>,
    temperature: f64,
    epochs: u32,
    seed: u64,
}

impl TaggerModel {
    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn epochs(&self) -> u32 {
        self.epochs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    pub fn margins(&self, tokens: &[String]) -> Vec<f64> {
        sentence_features(tokens)
            .iter()
            .map(|f| score(&self.weights, f))
            .collect()
    }

    pub fn predict_probs(&self, tokens: &[String]) -> TokenProbs {
        TokenProbs(
            self.margins(tokens)
                .into_iter()
                .map(|m| logistic(m / self.temperature))
                .collect(),
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&TEMPLATE_VERSION.to_le_bytes())?;
        w.write_all(&(BUCKETS as u32).to_le_bytes())?;
        w.write_all(&self.temperature.to_le_bytes())?;
        w.write_all(&self.epochs.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        let records: Vec<(u32, f64)> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i as u32, *w))
            .collect();
        w.write_all(&(records.len() as u64).to_le_bytes())?;
        for (i, weight) in records {
            w.write_all(&i.to_le_bytes())?;
            w.write_all(&weight.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EsdError> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(EsdError::BadMagic);
        }
        let version = r.u32()?;
        if version != TEMPLATE_VERSION {
            return Err(EsdError::VersionMismatch {
                found: version,
                expected: TEMPLATE_VERSION,
            });
        }
        let buckets = r.u32()?;
        if buckets as usize != BUCKETS {
            return Err(EsdError::BucketMismatch {
                found: buckets,
                expected: BUCKETS as u32,
            });
        }
        let temperature = r.f64()?;
        let epochs = r.u32()?;
        let seed = r.u64()?;
        let count = r.u64()?;
        let mut weights = vec![0.0; BUCKETS];
        let mut last: Option<u32> = None;
        for k in 0..count {
            let i = r.u32()?;
            let w = r.f64()?;
            if i as usize >= BUCKETS || last.is_some_and(|l| l >= i) {
                return Err(EsdError::BadRecord(k));
            }
            weights[i as usize] = w;
            last = Some(i);
        }
        if r.pos != bytes.len() {
            return Err(EsdError::Truncated);
        }
        Ok(TaggerModel {
            weights,
            temperature,
            epochs,
            seed,
        })
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, EsdError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EsdError> {
        let end = self.pos.checked_add(n).ok_or(EsdError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(EsdError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, EsdError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, EsdError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, EsdError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn score(weights: &[f64], features: &[u32]) -> f64 {
    features.iter().map(|&f| weights[f as usize]).sum()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Averaged perceptron with lazily updated running sums.
struct Perceptron {
    weights: Vec<f64>,
    totals: Vec<f64>,
    stamps: Vec<u64>,
    clock: u64,
}

impl Perceptron {
    fn new() -> Self {
        Perceptron {
            weights: vec![0.0; BUCKETS],
            totals: vec![0.0; BUCKETS],
            stamps: vec![0; BUCKETS],
            clock: 0,
        }
    }

    fn observe(&mut self, features: &[u32], positive: bool) {
        self.clock += 1;
        let y = if positive { 1.0 } else { -1.0 };
        if y * score(&self.weights, features) > 0.0 {
            return;
        }
        for &f in features {
            let f = f as usize;
            self.totals[f] += (self.clock - self.stamps[f]) as f64 * self.weights[f];
            self.stamps[f] = self.clock;
            self.weights[f] += y;
        }
    }

    fn averaged(self) -> Vec<f64> {
        let clock = self.clock.max(1);
        self.weights
            .iter()
            .zip(&self.totals)
            .zip(&self.stamps)
            .map(|((&w, &total), &stamp)| (total + (clock - stamp) as f64 * w) / clock as f64)
            .collect()
    }
}

fn validate(instances: &[EsdInstance]) -> Result<(), EsdError> {
    if instances.is_empty() {
        return Err(EsdError::EmptyCorpus);
    }
    for (index, inst) in instances.iter().enumerate() {
        if inst.tags.len() != inst.tokens.len() {
            return Err(EsdError::LengthMismatch {
                index,
                tokens: inst.tokens.len(),
                tags: inst.tags.len(),
            });
        }
        if let Some(&tag) = inst.tags.iter().find(|&&t| t > 1) {
            return Err(EsdError::BadTag { index, tag });
        }
    }
    Ok(())
}

/// Per-token features, gold tags, held out.
type Featurized<'a> = (Vec<Vec<u32>>, &'a [u8], bool);

/// Trains a detector. Every tenth instance (when there are at least ten) is
/// held out to fit the probability temperature; the rest are visited in a
/// seeded shuffled order each epoch.
pub fn train_tagger(instances: &[EsdInstance], epochs: u32, seed: u64) -> Result<TaggerModel, EsdError> {
    validate(instances)?;
    let holdout = |i: usize| instances.len() >= 10 && i % 10 == 9;
    let featurized: Vec<Featurized<'_>> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| (sentence_features(&inst.tokens), inst.tags.as_slice(), holdout(i)))
        .collect();
    let mut order: Vec<usize> = (0..featurized.len()).filter(|&i| !featurized[i].2).collect();
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut perceptron = Perceptron::new();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (features, tags, _) = &featurized[i];
            for (f, &tag) in features.iter().zip(tags.iter()) {
                perceptron.observe(f, tag == 1);
            }
        }
        log::debug!("perceptron epoch {} done", epoch + 1);
    }
    let weights = perceptron.averaged();

    let calibration: Vec<(f64, bool)> = featurized
        .iter()
        .filter(|(_, _, held)| *held || instances.len() < 10)
        .flat_map(|(features, tags, _)| {
            features
                .iter()
                .zip(tags.iter())
                .map(|(f, &t)| (score(&weights, f), t == 1))
        })
        .collect();
    let temperature = fit_temperature(&calibration);
    log::info!(
        "trained detector on {} instances, {} epochs, temperature {}",
        order.len(),
        epochs,
        temperature
    );
    Ok(TaggerModel {
        weights,
        temperature,
        epochs,
        seed,
    })
}

/// Grid value with the smallest log loss; the first one wins ties.
fn fit_temperature(samples: &[(f64, bool)]) -> f64 {
    let loss = |t: f64| -> f64 {
        samples
            .iter()
            .map(|&(m, y)| {
                let p = logistic(m / t).clamp(1e-12, 1.0 - 1e-12);
                if y {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum()
    };
    let mut best = (1.0, f64::INFINITY);
    for t in TEMPERATURE_GRID {
        let l = loss(t);
        if l < best.1 {
            best = (t, l);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{tokenize, TokenSeq};

    fn inst(s: &str, tags: &[u8]) -> EsdInstance {
        EsdInstance {
            tokens: tokenize(s),
            tags: tags.to_vec(),
        }
    }

    #[test]
    fn decode_examples() {
        let probs = TokenProbs(vec![0.1, 0.9, 0.8, 0.2]);
        assert_eq!(
            decode_spans(&probs, &DecodeConfig::default()),
            vec![SpanRange::new(1, 3)]
        );
        let all = DecodeConfig {
            threshold: 0.0,
            merge_gap: 0,
        };
        assert_eq!(decode_spans(&probs, &all), vec![SpanRange::new(0, 4)]);
        let none = DecodeConfig {
            threshold: 1.0,
            merge_gap: 0,
        };
        assert!(decode_spans(&probs, &none).is_empty());
        assert!(decode_spans(&TokenProbs::default(), &DecodeConfig::default()).is_empty());
    }

    #[test]
    fn decode_merge_gap() {
        let probs = TokenProbs(vec![0.9, 0.1, 0.9, 0.1, 0.1, 0.9]);
        let cfg = DecodeConfig {
            threshold: 0.5,
            merge_gap: 1,
        };
        assert_eq!(
            decode_spans(&probs, &cfg),
            vec![SpanRange::new(0, 3), SpanRange::new(5, 6)]
        );
    }

    #[test]
    fn shape_and_affixes() {
        assert_eq!(shape("Hello"), "Xx");
        assert_eq!(shape("CO2"), "Xd");
        assert_eq!(shape("'s"), "'x");
        assert_eq!(char_prefix("über", 2), Some("üb"));
        assert_eq!(char_suffix("über", 3), Some("ber"));
        assert_eq!(char_suffix("ab", 3), None);
    }

    #[test]
    fn features_are_deterministic() {
        let t = tokenize("a b c");
        let f = sentence_features(&t);
        assert_eq!(f.len(), 3);
        assert_eq!(f, sentence_features(&t));
        assert!(f.iter().flatten().all(|&b| (b as usize) < BUCKETS));
    }

    #[test]
    fn all_negative_instance_predicts_low() {
        let i = inst("the cat sat on the mat", &[0; 6]);
        let model = train_tagger(std::slice::from_ref(&i), 1, 0).unwrap();
        let probs = model.predict_probs(&i.tokens);
        assert!(probs.0.iter().all(|&p| p < 0.5), "{probs:?}");
    }

    #[test]
    fn learns_a_misspelling() {
        let mut data = Vec::new();
        for k in 0..40 {
            let filler = ["we", "saw", "it", "today", "then"][k % 5];
            data.push(inst(&format!("{filler} teh dog ran"), &[0, 1, 0, 0]));
            data.push(inst(&format!("{filler} the dog ran"), &[0, 0, 0, 0]));
        }
        let model = train_tagger(&data, 5, 3).unwrap();
        let teh = model.predict_probs(&tokenize("teh")).0[0];
        let the = model.predict_probs(&tokenize("the")).0[0];
        assert!(teh > the, "teh {teh} the {the}");
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<_> = (0..30)
            .map(|k| inst(&format!("x{} y z{}", k % 3, k % 7), &[0, (k % 2) as u8, 0]))
            .collect();
        let a = train_tagger(&data, 3, 11).unwrap().to_bytes();
        let b = train_tagger(&data, 3, 11).unwrap().to_bytes();
        assert_eq!(a, b);
    }

    #[test]
    fn training_errors() {
        assert!(matches!(train_tagger(&[], 1, 0), Err(EsdError::EmptyCorpus)));
        let bad = inst("a b", &[0]);
        assert!(matches!(
            train_tagger(&[bad], 1, 0),
            Err(EsdError::LengthMismatch { .. })
        ));
        let bad = inst("a b", &[0, 2]);
        assert!(matches!(train_tagger(&[bad], 1, 0), Err(EsdError::BadTag { .. })));
    }

    #[test]
    fn model_bytes_round_trip() {
        let data = vec![inst("a b c", &[0, 1, 0]), inst("a c", &[0, 0])];
        let model = train_tagger(&data, 2, 1).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..4], b"ESD1");
        let back = TaggerModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
        let probe = tokenize("c b a d");
        assert_eq!(back.predict_probs(&probe), model.predict_probs(&probe));
        assert!(model.predict_probs(&TokenSeq::empty()).is_empty());
    }

    #[test]
    fn model_bytes_rejections() {
        let model = train_tagger(&[inst("a", &[1])], 1, 0).unwrap();
        let bytes = model.to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(TaggerModel::from_bytes(&bad), Err(EsdError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 99;
        assert!(matches!(
            TaggerModel::from_bytes(&bad),
            Err(EsdError::VersionMismatch { found: 99, .. })
        ));
        assert!(matches!(
            TaggerModel::from_bytes(&bytes[..bytes.len() - 1]),
            Err(EsdError::Truncated)
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(TaggerModel::from_bytes(&long), Err(EsdError::Truncated)));
    }

    #[test]
    fn temperature_prefers_sharp_when_separable() {
        let samples: Vec<(f64, bool)> = (0..20)
            .map(|i| if i % 2 == 0 { (3.0, true) } else { (-3.0, false) })
            .collect();
        assert_eq!(fit_temperature(&samples), 0.25);
        let noisy: Vec<(f64, bool)> = (0..20).map(|i| (3.0, i % 2 == 0)).collect();
        assert_eq!(fit_temperature(&noisy), 4.0);
    }
}
