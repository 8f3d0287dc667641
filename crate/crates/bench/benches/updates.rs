use betanmf_bench::{outer_iteration, Fixture};
use betanmf_core::{bmm_update_w, fit_from, Algorithm, JmmStep, KernelOptions, SolverConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const BETAS: [f64; 4] = [0.0, 1.0, 1.5, 2.0];

fn w_update(c: &mut Criterion) {
    let fx = Fixture::new(400, 300, 10, 1);
    let anchor = fx.anchor();
    let opts = KernelOptions::default();
    let mut group = c.benchmark_group("w_update");
    for beta in BETAS {
        group.bench_with_input(BenchmarkId::new("bmm", beta), &beta, |b, &beta| {
            b.iter(|| bmm_update_w(&fx.data, &fx.start, beta, &opts).unwrap())
        });
        // The anchor-dependent intermediates are built once per outer
        // iteration, so they are part of the measured cost here.
        group.bench_with_input(BenchmarkId::new("jmm", beta), &beta, |b, &beta| {
            b.iter(|| JmmStep::new(&fx.data, &anchor, beta, &opts).unwrap().update_w(fx.start.h().view()))
        });
    }
    group.finish();
}

fn outer(c: &mut Criterion) {
    let fx = Fixture::new(400, 300, 10, 2);
    let opts = KernelOptions::default();
    let mut group = c.benchmark_group("outer_iteration");
    for beta in BETAS {
        for algorithm in [Algorithm::Bmm, Algorithm::Jmm] {
            group.bench_with_input(BenchmarkId::new(algorithm.name(), beta), &beta, |b, &beta| {
                b.iter(|| outer_iteration(&fx.data, black_box(&fx.start), algorithm, beta, &opts).unwrap())
            });
        }
    }
    group.finish();
}

fn short_fit(c: &mut Criterion) {
    let fx = Fixture::new(300, 200, 8, 3);
    let mut group = c.benchmark_group("fit_20_iterations");
    group.sample_size(10);
    for beta in [0.0, 1.0, 2.0] {
        for algorithm in [Algorithm::Bmm, Algorithm::Jmm] {
            let mut config = SolverConfig::new(beta, 8, algorithm);
            config.max_outer_iters = 20;
            config.tol = f64::MIN_POSITIVE;
            config.trace_kkt = false;
            group.bench_with_input(BenchmarkId::new(algorithm.name(), beta), &config, |b, config| {
                b.iter(|| fit_from(&fx.data, config, fx.start.clone()).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, w_update, outer, short_fit);
criterion_main!(benches);
