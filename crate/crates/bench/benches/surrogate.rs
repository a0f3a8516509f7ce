use catbond::surrogate::{mlp_forward, predict_batch, train_with_options, TrainOptions};
use catbond::MlpConfig;
use catbond_bench::{feature_grid, reference_network, synthetic_samples};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn prediction(c: &mut Criterion) {
    let model = reference_network();
    let mut group = c.benchmark_group("predict_batch");
    for rows in [1usize, 1000, 10_000] {
        let x = feature_grid(rows);
        group.throughput(Throughput::Elements(rows as u64));
        group.bench_with_input(BenchmarkId::from_parameter(rows), &x, |b, x| {
            b.iter(|| predict_batch(&model, black_box(x.view())).unwrap())
        });
    }
    group.finish();
    let row = feature_grid(1).row(0).to_vec();
    c.bench_function("mlp_forward_single_row", |b| b.iter(|| mlp_forward(&model, black_box(&row)).unwrap()));
}

fn training_epoch(c: &mut Criterion) {
    let data = synthetic_samples(4096);
    let config = MlpConfig { epochs: 1, ..MlpConfig::reference() };
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.throughput(Throughput::Elements(data.len() as u64));
    group.bench_function("one_epoch_4096_rows", |b| {
        b.iter(|| train_with_options(black_box(&data), &config, &TrainOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, prediction, training_epoch);
criterion_main!(benches);
