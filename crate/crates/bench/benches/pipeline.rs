use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use agtfuse_bench::{dataset, labels, triples};
use agtfuse_core::autodiff::ops::matmul;
use agtfuse_core::autodiff::Reduction;
use agtfuse_core::eval::f1_from_labels;
use agtfuse_core::models::BatchInputs;
use agtfuse_core::vote::vote_all;
use agtfuse_core::{
    Architecture, Model, ModelConfig, Sample, SplitMix64, Tape, Tensor, VoteConfig,
};

fn tensors(c: &mut Criterion) {
    let mut rng = SplitMix64::new(1);
    let a = Tensor::randn(&[128, 128], 1.0, &mut rng);
    let b = Tensor::randn(&[128, 128], 1.0, &mut rng);
    c.bench_function("matmul 128x128", |bench| {
        bench.iter(|| matmul(black_box(&a), black_box(&b)).unwrap())
    });
}

fn models(c: &mut Criterion) {
    let data = dataset(6, 2);
    let batch: Vec<&Sample> = data.samples().iter().take(32).collect();
    let labels: Vec<usize> = batch.iter().map(|s| s.label.unwrap().index()).collect();
    for arch in [Architecture::Baseline, Architecture::Agt] {
        let model = Model::new(arch, ModelConfig::default(), 0).unwrap();
        c.bench_function(&format!("{arch} forward+backward batch 32"), |bench| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let p = model.params.bind(&mut tape, true);
                let x = BatchInputs::record(&mut tape, &batch).unwrap();
                let logits = model.forward(&mut tape, &p, x).unwrap();
                let loss = tape
                    .cross_entropy(logits, &labels, Reduction::Mean)
                    .unwrap();
                tape.backward(loss).unwrap();
                black_box(tape.len())
            })
        });
    }
}

fn scoring(c: &mut Criterion) {
    let t = triples(10_000, 3);
    let cfg = VoteConfig::default();
    c.bench_function("vote_all 10k", |bench| {
        bench.iter(|| vote_all(black_box(&t), &cfg).unwrap())
    });
    let (p, g) = (labels(10_000, 4), labels(10_000, 5));
    c.bench_function("f1 10k", |bench| {
        bench.iter(|| f1_from_labels(black_box(&p), black_box(&g)).unwrap())
    });
}

criterion_group!(benches, tensors, models, scoring);
criterion_main!(benches);
