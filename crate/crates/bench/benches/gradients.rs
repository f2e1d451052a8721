use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use label_audit::gradient::{
    aggregate_influence, gradients_for, LastLayerHessian, LissaConfig, LissaInverse, PairwiseMethod,
};
use label_audit_bench::{fixture, trained};

fn aggregation(c: &mut Criterion) {
    let f = fixture(250, 400);
    let model = trained(&f, 5);
    let train = gradients_for(&model, &f.noisy).unwrap();
    let reference = gradients_for(&model, f.aux.dataset()).unwrap();

    let mut group = c.benchmark_group("gradients");
    group.sample_size(20);
    group.bench_function("last-layer-gradients", |b| {
        b.iter(|| gradients_for(&model, black_box(&f.noisy)).unwrap())
    });
    group.bench_function("gd", |b| {
        b.iter(|| aggregate_influence(black_box(&train), &reference, PairwiseMethod::Dot).unwrap())
    });
    group.bench_function("gc", |b| {
        b.iter(|| aggregate_influence(black_box(&train), &reference, PairwiseMethod::Cosine).unwrap())
    });

    let probs = model.predict_proba_batch(f.noisy.features()).unwrap();
    let features = model.penultimate_batch(f.noisy.features()).unwrap();
    let hessian = LastLayerHessian::new(probs, features, None).unwrap();
    let cfg = LissaConfig {
        depth: 200,
        ..LissaConfig::default()
    };
    group.bench_function("if-lissa-200", |b| {
        b.iter(|| {
            let inverse = LissaInverse {
                hessian: &hessian,
                config: cfg.clone(),
            };
            aggregate_influence(
                black_box(&train),
                &reference,
                PairwiseMethod::Influence {
                    inverse: &inverse,
                    train_size: train.len(),
                },
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, aggregation);
criterion_main!(benches);
