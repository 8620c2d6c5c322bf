//! Synthetic clean corpora for experiments and tests.
//!
//! Sentences are walks through a sparse random bigram graph: every word has
//! a handful of allowed successors, so a corrupted sentence contains word
//! pairs the clean language never produces.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand::SeedableRng;

use crate::alignment::TokenSeq;
use crate::datagen::{sentence_rng, SeededRng};

/// How tokens of the generated language look.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Script {
    /// Lowercase pseudo-words built from consonant-vowel syllables.
    Latin,
    /// Single CJK ideographs, one character per token.
    Cjk,
}

#[derive(Clone, Debug)]
pub struct BigramLanguage {
    vocab: Vec<String>,
    successors: Vec<Vec<usize>>,
    min_len: usize,
    max_len: usize,
}

const CONSONANTS: &[char] = &[
    'b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z',
];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

fn latin_word(mut index: usize) -> String {
    // Base-70 digits, one syllable each; at least two syllables.
    let base = CONSONANTS.len() * VOWELS.len();
    let mut word = String::new();
    for _ in 0..2 {
        let syl = index % base;
        word.push(CONSONANTS[syl / VOWELS.len()]);
        word.push(VOWELS[syl % VOWELS.len()]);
        index /= base;
    }
    while index > 0 {
        let syl = index % base;
        word.push(CONSONANTS[syl / VOWELS.len()]);
        word.push(VOWELS[syl % VOWELS.len()]);
        index /= base;
    }
    word
}

pub fn vocabulary(script: Script, size: usize) -> Vec<String> {
    (0..size)
        .map(|i| match script {
            Script::Latin => latin_word(i),
            Script::Cjk => char::from_u32(0x4E00 + i as u32)
                .expect("CJK block is contiguous")
                .to_string(),
        })
        .collect()
}

impl BigramLanguage {
    pub fn new(script: Script, vocab_size: usize, successors_per_word: usize, seed: u64) -> Self {
        assert!(vocab_size >= 2 && successors_per_word >= 1);
        let vocab = vocabulary(script, vocab_size);
        let mut rng = SeededRng::seed_from_u64(seed);
        let all: Vec<usize> = (0..vocab_size).collect();
        let successors = (0..vocab_size)
            .map(|_| {
                all.choose_multiple(&mut rng, successors_per_word.min(vocab_size))
                    .copied()
                    .collect()
            })
            .collect();
        BigramLanguage {
            vocab,
            successors,
            min_len: 8,
            max_len: 20,
        }
    }

    pub fn with_lengths(mut self, min_len: usize, max_len: usize) -> Self {
        assert!(1 <= min_len && min_len <= max_len);
        self.min_len = min_len;
        self.max_len = max_len;
        self
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn sentence<R: Rng + ?Sized>(&self, rng: &mut R) -> TokenSeq {
        let len = rng.random_range(self.min_len..=self.max_len);
        let mut word = rng.random_range(0..self.vocab.len());
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.vocab[word].clone());
            word = *self.successors[word].choose(rng).expect("non-empty successors");
        }
        TokenSeq::new(out)
    }

    /// `count` sentences; sentence `i` uses the generator `seed ^ i`.
    pub fn corpus(&self, count: usize, seed: u64) -> Vec<TokenSeq> {
        (0..count)
            .map(|i| self.sentence(&mut sentence_rng(seed, i)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn vocabularies_are_distinct() {
        for script in [Script::Latin, Script::Cjk] {
            let v = vocabulary(script, 1000);
            let set: HashSet<_> = v.iter().collect();
            assert_eq!(set.len(), 1000);
            assert!(v
                .iter()
                .all(|w| !w.is_empty() && !w.contains(char::is_whitespace)));
        }
        assert_eq!(vocabulary(Script::Cjk, 1)[0], "一");
    }

    #[test]
    fn corpus_is_deterministic_and_in_bounds() {
        let lang = BigramLanguage::new(Script::Latin, 50, 3, 9).with_lengths(3, 6);
        let a = lang.corpus(20, 5);
        assert_eq!(a, lang.corpus(20, 5));
        assert!(a.iter().all(|s| (3..=6).contains(&s.len())));
    }
}
