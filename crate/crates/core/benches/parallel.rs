//! Rayon pool versus a single-thread pool on the data-parallel hot paths.
//!
//! Without the `parallel` feature both variants run the sequential fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPool;
use tensorized::cluster::AssignmentMatrix;
use tensorized::data::{gen_synthetic, SyntheticKind};
use tensorized::metrics::{tsne, TsneConfig};
use tensorized::nn::Optimizer;
use tensorized::recon::{PtaeModel, ReconArch};
use tensorized::vae::{NoiseTable, ReconMode, TvaeModel};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().expect("rayon pool");
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("rayon pool");
    vec![("pool", default), ("single_thread", single)]
}

fn loss_matrix(c: &mut Criterion) {
    let ds = gen_synthetic(SyntheticKind::Mixture, 0);
    let model = PtaeModel::build(
        ReconArch::Ptae,
        ds.d(),
        3,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    let mut group = c.benchmark_group("ptae_loss_matrix");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| model.loss_matrix(black_box(&ds.x)).unwrap()))
        });
    }
    group.finish();
}

fn vae_step(c: &mut Criterion) {
    let ds = gen_synthetic(SyntheticKind::Mixture, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = TvaeModel::build(ds.d(), 16, 2, 3, ReconMode::MseLinear, true, &mut rng).unwrap();
    let s = AssignmentMatrix::new(3, ds.labels.clone().unwrap()).unwrap();
    let noise = NoiseTable::draw(3, ds.n(), 2, &mut rng);
    let mut group = c.benchmark_group("tvae_grad_step");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter_batched(
                || (model.clone(), Optimizer::adam(1e-3).unwrap()),
                |(mut m, mut opt)| {
                    pool.install(|| m.grad_step(&ds.x, &s, &noise, &mut opt).unwrap())
                },
                criterion::BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn exact_tsne(c: &mut Criterion) {
    let ds = gen_synthetic(SyntheticKind::Mixture, 0);
    let cfg = TsneConfig {
        iters: 50,
        ..TsneConfig::default()
    };
    let mut group = c.benchmark_group("tsne_50_iters");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| tsne(black_box(&ds.x), &cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, loss_matrix, vae_step, exact_tsne);
criterion_main!(benches);
