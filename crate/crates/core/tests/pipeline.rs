use spangec::annotation::MissingSpanPolicy;
use spangec::datagen::{corrupt_corpus, make_esc_gold, make_esd_instance, CorruptConfig};
use spangec::esc::{train_corrector, OracleCorrector};
use spangec::esd::{train_tagger, DecodeConfig};
use spangec::eval::efficiency_report;
use spangec::pipeline::{run_corpus, run_sentence, OracleDetector, TaggerDetector};
use spangec::synth::{BigramLanguage, Script};
use spangec::TokenSeq;

fn pairs(script: Script, n: usize, rate: f64, seed: u64) -> Vec<(TokenSeq, TokenSeq)> {
    let lang = BigramLanguage::new(script, 300, 3, seed);
    let clean = lang.corpus(n, seed);
    corrupt_corpus(
        &clean,
        &CorruptConfig::with_error_rate(rate, lang.vocab().to_vec(), seed),
    )
}

#[test]
fn oracle_pipeline_reproduces_targets() {
    for script in [Script::Latin, Script::Cjk] {
        for (s, t) in pairs(script, 300, 0.2, 3) {
            let out = run_sentence(
                0,
                &s,
                &OracleDetector::new(&s, &t),
                &OracleCorrector::new(t.clone()),
                MissingSpanPolicy::Fail,
                Some(&t),
            )
            .unwrap();
            assert_eq!(out.output, t);
        }
    }
}

#[test]
fn trained_models_leave_clean_text_alone_when_nothing_fires() {
    let train = pairs(Script::Latin, 2000, 0.1, 5);
    let esd: Vec<_> = train.iter().map(|(s, t)| make_esd_instance(s, t)).collect();
    let esc: Vec<_> = train.iter().map(|(s, t)| make_esc_gold(s, t).unwrap()).collect();
    let model = train_tagger(&esd, 3, 0).unwrap();
    let table = train_corrector(&esc).unwrap();
    let clean: Vec<TokenSeq> = train.iter().map(|(_, t)| t.clone()).collect();
    // Threshold above every probability: nothing is flagged.
    let det = TaggerDetector {
        model: &model,
        decode: DecodeConfig {
            threshold: 1.0 + f64::EPSILON,
            merge_gap: 0,
        },
    };
    let out = run_corpus(&clean, None, &det, &table, MissingSpanPolicy::Copy).unwrap();
    assert!(out.iter().zip(&clean).all(|(o, c)| &o.output == c));
    let steps: Vec<_> = out.iter().map(|o| o.steps).collect();
    assert_eq!(efficiency_report(&steps).span_decode_steps, 0);
}

#[test]
fn corrupt_corpus_matches_per_sentence_seeding() {
    let p1 = pairs(Script::Cjk, 50, 0.3, 9);
    let p2 = pairs(Script::Cjk, 50, 0.3, 9);
    assert_eq!(p1, p2);
    assert!(p1.iter().any(|(s, t)| s != t));
}
