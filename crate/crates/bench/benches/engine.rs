use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fairdrift::federation::{merge_matrix, Threshold};
use fairdrift::model::{init_params, local_train};
use fairdrift::{run_federation, Algorithm, AlgorithmKind, FederationConfig, Window};
use fairdrift_bench::{arch, pool, stream, train_config};

fn local_training(c: &mut Criterion) {
    let (_, streams) = stream(200);
    let p = init_params(arch(16), 1).unwrap();
    let cfg = train_config();
    c.bench_function("local_train 200 examples, 5 epochs", |b| {
        b.iter(|| local_train(black_box(&p), &streams[0][0].examples, &cfg).unwrap())
    });
}

fn merge_distances(c: &mut Criterion) {
    let (_, streams) = stream(200);
    let pool = pool(&streams, 3, 4, 16);
    let delta = Threshold::Uniform(1.0);
    c.bench_function("merge_matrix 3 models, 4 timesteps", |b| {
        b.iter(|| merge_matrix(black_box(&pool), &delta, true).unwrap())
    });
}

fn federation(c: &mut Criterion) {
    let (schedule, streams) = stream(50);
    let mut group = c.benchmark_group("run_federation");
    group.sample_size(10);
    for algorithm in [Algorithm::FedAvg, Algorithm::FairFedDrift] {
        let cfg = FederationConfig {
            clients: 10,
            timesteps: 10,
            rounds: 2,
            train: train_config(),
            kind: AlgorithmKind::new(algorithm, 1.0, Window::Full),
            arch: arch(16),
            seed: 0,
        };
        group.bench_function(algorithm.name(), |b| {
            b.iter(|| run_federation(&cfg, &streams, &schedule).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, local_training, merge_distances, federation);
criterion_main!(benches);
