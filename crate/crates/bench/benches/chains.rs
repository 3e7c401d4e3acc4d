use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spikegpf::{if_chain, signed_if_chain, SpikingConfig, Tensor};

fn drive(rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0)
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn chains(c: &mut Criterion) {
    let x = drive(150, 100);
    let mut group = c.benchmark_group("chains");
    for horizon in [1, 4, 8] {
        let cfg = SpikingConfig::new(0.1, 0.1, horizon).unwrap();
        group.bench_with_input(BenchmarkId::new("if", horizon), &cfg, |b, cfg| {
            b.iter(|| if_chain(black_box(&x), cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("signed_if", horizon), &cfg, |b, cfg| {
            b.iter(|| signed_if_chain(black_box(&x), cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, chains);
criterion_main!(benches);
