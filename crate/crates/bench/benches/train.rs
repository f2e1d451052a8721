use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use label_audit::model::train;
use label_audit_bench::{fixture, model_config};

fn training(c: &mut Criterion) {
    let f = fixture(625, 1000);
    let cfg = model_config(1);
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("one-epoch-4000x32", |b| {
        b.iter(|| train(black_box(&f.noisy), f.aux.dataset(), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, training);
criterion_main!(benches);
