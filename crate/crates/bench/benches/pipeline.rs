use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use xling_core::alignment::{procrustes, rcsls_align, refine, RcslsConfig};
use xling_core::corpus::Sentence;
use xling_core::embedding::{train_cbow, CbowConfig};
use xling_core::retrieval::{evaluate, Method};
use xling_core::synth::generate;

fn alignment(c: &mut Criterion) {
    let inst = generate(2000, 50, 0.1, 1).unwrap();
    let (train, test) = inst.train_test(500, 500, 1).unwrap();
    let w = procrustes(&inst.src, &inst.tgt, &train).unwrap();

    c.bench_function("procrustes n=500 d=50", |b| {
        b.iter(|| procrustes(black_box(&inst.src), black_box(&inst.tgt), black_box(&train)).unwrap())
    });
    c.bench_function("refine 1 iteration n=2000 d=50", |b| {
        b.iter(|| refine(&inst.src, &inst.tgt, black_box(&w), 1, 10, 2000).unwrap())
    });
    let config = RcslsConfig {
        epochs: 1,
        ..RcslsConfig::default()
    };
    c.bench_function("rcsls 1 epoch n=500 d=50", |b| {
        b.iter(|| rcsls_align(&inst.src, &inst.tgt, &train, &config, Some(&w)).unwrap())
    });
    c.bench_function("csls eval 500 queries over 2000", |b| {
        b.iter(|| evaluate(black_box(&w), &test, &inst.src, &inst.tgt, Method::Csls, 10).unwrap())
    });
    c.bench_function("nn eval 500 queries over 2000", |b| {
        b.iter(|| evaluate(black_box(&w), &test, &inst.src, &inst.tgt, Method::Nn, 10).unwrap())
    });
}

fn cbow(c: &mut Criterion) {
    let corpus: Vec<Sentence> = (0..2000)
        .map(|i| {
            Sentence::from_whitespace(&format!(
                "w{} w{} w{} w{} w{} w{} w{} w{}",
                i % 97,
                i % 89,
                i % 83,
                i % 79,
                i % 73,
                i % 71,
                i % 67,
                i % 61
            ))
        })
        .collect();
    let config = CbowConfig {
        dim: 100,
        epochs: 1,
        ..CbowConfig::default()
    };
    let mut group = c.benchmark_group("cbow");
    group.sample_size(10);
    group.bench_function("1 epoch 16k tokens d=100", |b| {
        b.iter(|| train_cbow(black_box(&corpus), &config, None).unwrap())
    });
    group.finish();
}

criterion_group!(benches, alignment, cbow);
criterion_main!(benches);
