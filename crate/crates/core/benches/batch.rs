//! Sequential versus rayon-parallel batch throughput for the per-sentence
//! pipeline stages.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use spangec::alignment::edits_between;
use spangec::batch;
use spangec::datagen::{
    corrupt_corpus, make_esc_mixed, make_esd_instance, sentence_rng, CorruptConfig, SpanSampleConfig,
};
use spangec::esd::train_tagger;
use spangec::synth::{BigramLanguage, Script};
use spangec::TokenSeq;

fn corpus(n: usize) -> Vec<(TokenSeq, TokenSeq)> {
    let lang = BigramLanguage::new(Script::Latin, 1000, 4, 1);
    let clean = lang.corpus(n, 1 << 32);
    corrupt_corpus(
        &clean,
        &CorruptConfig::with_error_rate(0.1, lang.vocab().to_vec(), 2 << 32),
    )
}

fn stages(c: &mut Criterion) {
    let pairs = corpus(4000);
    let esd: Vec<_> = pairs[..1000]
        .iter()
        .map(|(s, t)| make_esd_instance(s, t))
        .collect();
    let model = train_tagger(&esd, 2, 0).expect("non-empty corpus");
    let spans = SpanSampleConfig::default();

    let mut group = c.benchmark_group("batch");
    group.throughput(Throughput::Elements(pairs.len() as u64));
    group.sample_size(20);

    let align = |_: usize, (s, t): &(TokenSeq, TokenSeq)| edits_between(s, t).len();
    let detect = |_: usize, (s, _): &(TokenSeq, TokenSeq)| model.predict_probs(s).len();
    let datagen = |i: usize, (s, t): &(TokenSeq, TokenSeq)| {
        make_esc_mixed(s, t, &spans, 0.5, &mut sentence_rng(7, i))
            .expect("marker-free")
            .0
            .annotated
            .rendered
            .len()
    };

    group.bench_function(BenchmarkId::new("align", "sequential"), |b| {
        b.iter(|| black_box(batch::map_sequential(&pairs, align)))
    });
    group.bench_function(BenchmarkId::new("detect", "sequential"), |b| {
        b.iter(|| black_box(batch::map_sequential(&pairs, detect)))
    });
    group.bench_function(BenchmarkId::new("datagen", "sequential"), |b| {
        b.iter(|| black_box(batch::map_sequential(&pairs, datagen)))
    });
    #[cfg(feature = "parallel")]
    {
        group.bench_function(BenchmarkId::new("align", "parallel"), |b| {
            b.iter(|| black_box(batch::map_parallel(&pairs, align)))
        });
        group.bench_function(BenchmarkId::new("detect", "parallel"), |b| {
            b.iter(|| black_box(batch::map_parallel(&pairs, detect)))
        });
        group.bench_function(BenchmarkId::new("datagen", "parallel"), |b| {
            b.iter(|| black_box(batch::map_parallel(&pairs, datagen)))
        });
    }
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
