use criterion::{criterion_group, criterion_main, Criterion};
use frg_flow::measure::{EstimatorConfig, MeasureModel};
use frg_flow::onsager::om_estimate;
use frg_flow::BallSampler;
use frg_flow_bench::quartic_model;
use nalgebra::{DMatrix, DVector};

fn balls(c: &mut Criterion) {
    let sampler =
        BallSampler::new(MeasureModel::standard_normal(2).unwrap(), &EstimatorConfig::monte_carlo(1_000_000, 3, 16)).unwrap();
    let j = DMatrix::identity(2, 2);
    let center = DVector::from_vec(vec![0.3, -0.1]);
    let mut group = c.benchmark_group("small ball");
    group.sample_size(20);
    group.bench_function("plain r=0.5", |b| b.iter(|| sampler.plain_ball(&j, &center, 0.5).unwrap()));
    group.bench_function("importance r=0.01", |b| b.iter(|| sampler.importance_ball(&j, &center, 0.01).unwrap()));
    group.finish();
}

fn om(c: &mut Criterion) {
    let sampler = BallSampler::new(quartic_model(1), &EstimatorConfig::monte_carlo(1_000_000, 5, 16)).unwrap();
    let j = DMatrix::identity(1, 1);
    let (a, b) = (DVector::from_element(1, 0.0), DVector::from_element(1, 0.8));
    let mut group = c.benchmark_group("om");
    group.sample_size(10);
    group.bench_function("quartic 5 radii", |bch| {
        bch.iter(|| om_estimate(&sampler, &j, &a, &b, &[0.4, 0.3, 0.2, 0.1, 0.05], 4).unwrap())
    });
    group.finish();
}

criterion_group!(benches, balls, om);
criterion_main!(benches);
