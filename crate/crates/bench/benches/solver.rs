use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use std::hint::black_box;

use zoconex::conex::{conex_run, ConexParams};
use zoconex::geometry::{prox_step, Domain, Geometry};
use zoconex::problem::OracleLedger;
use zoconex::rng::{Stream, StreamSet};
use zoconex::smoothing::two_point_gradient;
use zoconex_bench::{convex_fixture, probe};

fn estimator(c: &mut Criterion) {
    let mut group = c.benchmark_group("two_point_gradient");
    for n in [10, 100] {
        let (problem, smoothing, _) = convex_fixture(n, 1);
        let x = probe(n, 0.3);
        let streams = StreamSet::new(1);
        let mut noise = streams.stream(Stream::Noise(0));
        let mut dirs = streams.stream(Stream::Direction(0));
        let mut ledger = OracleLedger::new(2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                two_point_gradient(&problem.oracles[0], 0, black_box(&x), smoothing.nu0, &mut noise, &mut dirs, &mut ledger)
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn conex_iterations(c: &mut Criterion) {
    let mut group = c.benchmark_group("conex_100_iterations");
    for (n, m) in [(20, 3), (100, 5)] {
        let (problem, smoothing, x0) = convex_fixture(n, m);
        let params = ConexParams::constant(100, 1e3, 10.0);
        group.bench_function(format!("n{n}_m{m}"), |b| {
            b.iter(|| conex_run(&problem, &params, &smoothing, black_box(&x0), 7).unwrap())
        });
    }
    group.finish();
}

fn prox(c: &mut Criterion) {
    let n = 100;
    let v = probe(n, 1.1) * 5.0;
    for (name, domain) in [
        ("box", Domain::cube(n, 1.0).unwrap()),
        ("ball", Domain::ball(DVector::zeros(n), 2.0).unwrap()),
    ] {
        let center = domain.project(&(probe(n, 0.2) * 0.5));
        c.bench_function(&format!("prox_{name}_n{n}"), |b| {
            b.iter(|| prox_step(&Geometry::Euclidean, &domain, black_box(&v), &center, 3.0).unwrap())
        });
    }
}

criterion_group!(benches, estimator, conex_iterations, prox);
criterion_main!(benches);
