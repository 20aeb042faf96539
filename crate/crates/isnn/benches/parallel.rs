//! Parallel vs sequential throughput on the hot paths: batched inference and
//! dataset construction. Run with `cargo bench` (rayon on by default) and with
//! `cargo bench --no-default-features` to get the purely sequential numbers
//! for the same batch sizes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use isnn::datapipe::{build_illegal, synth, LabelMode};
use isnn::keying::NoiseType;
use isnn::nn::cnn_s;

fn bench_forward(c: &mut Criterion) {
    let mut model = cnn_s([1, 28, 28], 10).unwrap();
    model.init_kaiming(7);
    let in_len = model.input_len();

    let mut group = c.benchmark_group("forward_slice");
    for &n in &[32usize, 128, 512] {
        let data: Vec<f64> = (0..n * in_len).map(|i| (i % 256) as f64 / 255.0).collect();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| model.forward_slice(&data, n))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| model.forward_slice_seq(&data, n))
        });
    }
    group.finish();
}

fn bench_dataset_build(c: &mut Criterion) {
    let clean = synth::generate(1024, 0).unwrap();
    let mut group = c.benchmark_group("dataset");
    group.throughput(Throughput::Elements(clean.images.len() as u64));
    group.bench_function("build_illegal_1024", |b| {
        b.iter(|| build_illegal(&clean, 8, NoiseType::Uniform, LabelMode::Lc, 1).unwrap())
    });
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_forward, bench_dataset_build
}
criterion_main!(benches);
