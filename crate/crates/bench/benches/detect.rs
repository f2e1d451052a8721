use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use label_audit::similarity::{audit, detect, embed_pair};
use label_audit::{RectifyConfig, Similarity};
use label_audit_bench::{fixture, trained};

fn detection(c: &mut Criterion) {
    let f = fixture(625, 1000);
    let model = trained(&f, 5);
    let (emb, emb_aux) = embed_pair(&f.noisy, &f.aux, &model).unwrap();

    let mut group = c.benchmark_group("detect");
    group.sample_size(20);
    for k in [10, 100] {
        for measure in [Similarity::Cosine, Similarity::Dot] {
            group.bench_with_input(BenchmarkId::new(measure.method_name(), k), &k, |b, &k| {
                b.iter(|| detect(black_box(&emb), &emb_aux, k, measure).unwrap())
            });
        }
    }
    group.bench_function("audit-rectify", |b| {
        b.iter(|| {
            audit(
                black_box(&f.noisy),
                &f.aux,
                &model,
                &RectifyConfig::default(),
                Similarity::Cosine,
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, detection);
criterion_main!(benches);
