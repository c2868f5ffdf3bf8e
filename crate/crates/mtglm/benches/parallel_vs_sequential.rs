//! Compares the rayon-backed execution path against the always-available
//! sequential fallback on the workloads that dominate a study run: a batch
//! of independent replicate path fits and the leave-one-out sensitivity
//! pass of the robust initializer.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use mtglm::exec::{map_indexed, map_indexed_seq};
use mtglm::init::{pena_yohai_init, InitConfig};
use mtglm::penalties::PenaltySpec;
use mtglm::robust_loss::RhoFunction;
use mtglm::selection::{fit_path, lambda_grid, FitMethod, PathConfig, RicFlavor};
use mtglm::simulation::{generate_sample, Design, ScenarioConfig};

fn replicate_mse(seed: u64) -> f64 {
    let cfg = ScenarioConfig::new(Design::Avy, 60, 5, 0.0, 0, 1, seed).unwrap();
    let data = generate_sample(&cfg, seed).unwrap();
    let rho = RhoFunction::default_quartic();
    let spec = PenaltySpec::lasso(1.0);
    let method = FitMethod::Mt(rho);
    let grid = lambda_grid(&data, &spec, &method, 12, 1e-2).unwrap();
    let path = fit_path(&data, &spec, &grid, method, &PathConfig::default()).unwrap();
    let fit = &path.fits[path.selected(RicFlavor::Bic)];
    let truth = cfg.beta_star();
    (0..fit.beta.len())
        .map(|j| (fit.beta[j] - truth[j]) * (fit.beta[j] - truth[j]))
        .sum()
}

fn bench_replicate_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("replicate_batch_of_8");
    group.sample_size(10);
    group.bench_function("parallel_map", |b| {
        b.iter(|| black_box(map_indexed(8, |i| replicate_mse(1_000 + i as u64))))
    });
    group.bench_function("sequential_map", |b| {
        b.iter(|| black_box(map_indexed_seq(8, |i| replicate_mse(1_000 + i as u64))))
    });
    group.finish();
}

fn bench_initializer(c: &mut Criterion) {
    // The leave-one-out refits inside the initializer go through the same
    // execution facade; with the `parallel` feature they fan out.
    let cfg = ScenarioConfig::new(Design::Avy, 80, 5, 0.0, 0, 1, 99).unwrap();
    let data = generate_sample(&cfg, 99).unwrap();
    let spec = PenaltySpec::lasso(0.02);
    let init_cfg = InitConfig::default();
    let mut group = c.benchmark_group("pena_yohai_init_80x5");
    group.sample_size(10);
    group.bench_function("as_built", |b| {
        b.iter(|| black_box(pena_yohai_init(&data, &spec, &init_cfg).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, bench_replicate_batch, bench_initializer);
criterion_main!(benches);
