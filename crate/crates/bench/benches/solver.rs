use criterion::{criterion_group, criterion_main, Criterion};
use frg_flow::flow::run_flow;
use frg_flow::measure::EstimatorConfig;
use frg_flow::{FlowGrid, SolveOptions};
use frg_flow_bench::quartic_problem;
use nalgebra::DVector;

fn tilt_solve(c: &mut Criterion) {
    let p1 = quartic_problem(1, EstimatorConfig::quadrature(128));
    let p2 = quartic_problem(2, EstimatorConfig::quadrature(48));
    let y1 = DVector::from_element(1, 0.6);
    let y2 = DVector::from_vec(vec![0.6, -0.2]);
    c.bench_function("conjugate 1d", |b| b.iter(|| p1.conjugate(1.0, &y1, None, SolveOptions::default()).unwrap()));
    c.bench_function("conjugate 2d", |b| b.iter(|| p2.conjugate(1.0, &y2, None, SolveOptions::default()).unwrap()));
}

fn flow(c: &mut Criterion) {
    let p = quartic_problem(1, EstimatorConfig::quadrature(128));
    let grid = FlowGrid::linspace(0.1, 3.0, 30, DVector::from_element(1, 0.2)).unwrap();
    let mut group = c.benchmark_group("flow");
    group.sample_size(10);
    group.bench_function("quartic 30 points", |b| b.iter(|| run_flow(&p, &grid, SolveOptions::default()).unwrap()));
    group.finish();
}

criterion_group!(benches, tilt_solve, flow);
criterion_main!(benches);
