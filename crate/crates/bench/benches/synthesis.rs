use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sls_core::distributed::{self, DistributedOptions};
use sls_core::lti::{locality_support, make_chain_system, LinearSystem};
use sls_core::qp::{solve, ProgramBuilder};
use sls_core::synthesis::{synthesize_centralized, SynthesisOptions};
use sls_core::{RobustSpec, SupportMask};

fn chain(n: usize, x_max: f64) -> (LinearSystem, RobustSpec, SupportMask) {
    let sys = make_chain_system(n, 0.4, 1.0).unwrap();
    let spec = RobustSpec::from_box(&vec![1.0; n], &vec![x_max; n], &vec![4.0; n], 4).unwrap();
    let support = locality_support(&sys, 3, 4);
    (sys, spec, support)
}

fn centralized(c: &mut Criterion) {
    let mut group = c.benchmark_group("centralized");
    group.sample_size(10);
    for n in [5, 10, 20] {
        let (sys, spec, support) = chain(n, 1.6);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| synthesize_centralized(&sys, &spec, &support, &SynthesisOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn distributed_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("distributed");
    group.sample_size(10);
    for n in [5, 10] {
        let (sys, spec, support) = chain(n, if n == 5 { 1.3 } else { 1.6 });
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| distributed::run(&sys, &spec, &support, &DistributedOptions::default()).unwrap())
        });
    }
    group.finish();
}

/// Tridiagonal least squares with a sum constraint and nonnegativity.
fn qp(c: &mut Criterion) {
    let mut group = c.benchmark_group("qp");
    for n in [50, 500] {
        let mut b = ProgramBuilder::new(n);
        for i in 0..n {
            b.add_quadratic(i, i, 4.0).add_linear(i, -((i % 7) as f64));
            if i + 1 < n {
                b.add_quadratic(i, i + 1, -1.0);
            }
            b.nonneg(i);
        }
        let all: Vec<(usize, f64)> = (0..n).map(|i| (i, 1.0)).collect();
        b.add_equality(&all, n as f64 / 2.0);
        let prog = b.build().unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bch, _| bch.iter(|| solve(&prog, 1e-8, 200_000)));
    }
    group.finish();
}

criterion_group!(benches, centralized, distributed_run, qp);
criterion_main!(benches);
