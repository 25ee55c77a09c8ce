use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use frg_flow::measure::{Estimator, EstimatorConfig};
use frg_flow_bench::quartic_model;
use std::hint::black_box;

fn quadrature(c: &mut Criterion) {
    let mut group = c.benchmark_group("quadrature expect");
    for (dim, nodes) in [(1, 128), (2, 48), (3, 24)] {
        let est = Estimator::new(quartic_model(dim), EstimatorConfig::quadrature(nodes)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{dim}d x {nodes}")), &est, |b, est| {
            b.iter(|| est.expect(|x| black_box(x[0] * x[0]), |x| 0.2 * x[0]).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte carlo expect");
    group.sample_size(20);
    for dim in [1, 4] {
        let est = Estimator::new(quartic_model(dim), EstimatorConfig::monte_carlo(100_000, 1, 8)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(dim), &est, |b, est| {
            b.iter(|| est.expect(|x| black_box(x[0] * x[0]), |x| 0.2 * x[0]).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, quadrature, monte_carlo);
criterion_main!(benches);
