use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wgflow_bench::gaussian_cloud;
use wgflow_core::energy::{wasserstein_gradient, RadialPotential, ScalarField1D};
use wgflow_core::ensemble::exact_w2;
use wgflow_core::stepper::trapezoid_step;
use wgflow_core::{EnergySpec, SchemeConfig, SchemeKind};

fn full_spec() -> EnergySpec {
    EnergySpec::new(
        ScalarField1D::LogRegularized { scale: 0.5, eps: 0.01 },
        0.1,
        RadialPotential::QuadraticPaper,
        RadialPotential::LogRegularized { c: -0.08, eps: 0.01 },
    )
    .unwrap()
}

fn bench_gradient(c: &mut Criterion) {
    let spec = full_spec();
    let mut group = c.benchmark_group("wasserstein_gradient");
    for &n in &[64usize, 256] {
        let e = gaussian_cloud(1, n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &e, |b, e| {
            b.iter(|| wasserstein_gradient(e, &spec).unwrap())
        });
    }
    group.finish();
}

fn bench_trapezoid_step(c: &mut Criterion) {
    let spec = full_spec();
    let e = gaussian_cloud(2, 64, 2);
    let cfg = SchemeConfig::new(SchemeKind::Trapezoid, 1.0 / 64.0, 1.0);
    c.bench_function("trapezoid_step_n64", |b| {
        b.iter(|| trapezoid_step(&e, &spec, &cfg).unwrap())
    });
}

fn bench_exact_w2(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_w2");
    for &n in &[64usize, 256] {
        let a = gaussian_cloud(3, n, 2);
        let b_cloud = gaussian_cloud(4, n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| exact_w2(&a, &b_cloud).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gradient, bench_trapezoid_step, bench_exact_w2);
criterion_main!(benches);
