use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use taylor_lab::cross_section::{build_spectrum, CrossSectionSpec, Profile};
use taylor_lab::evolution::{evolve, evolve_sequential, initialize, InitialDatum, WavenumberGrid};
use taylor_lab::modal_operator::assemble;
use taylor_lab::par;

fn propagation(c: &mut Criterion) {
    let s = build_spectrum(&CrossSectionSpec::interval(16)).unwrap();
    let f = Profile::cosine().field(&s).unwrap();
    let op = assemble(&f, &s, 0.1).unwrap();
    let mut group = c.benchmark_group("evolve");
    group.sample_size(10);
    for k in [256usize, 1024] {
        let grid = WavenumberGrid::new(60.0, k, 0.1, 1.0, 1.0).unwrap();
        let init = initialize(
            &InitialDatum::Modulated {
                mass: 1.0,
                width: 1.0,
                amplitude: 0.5,
            },
            &grid,
            16,
        )
        .unwrap();
        group.bench_with_input(BenchmarkId::new("parallel", k), &k, |b, _| {
            b.iter(|| evolve(black_box(&init), &op, &grid, 5.0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", k), &k, |b, _| {
            b.iter(|| evolve_sequential(black_box(&init), &op, &grid, 5.0).unwrap())
        });
    }
    group.finish();
    println!("parallel feature enabled: {}", par::parallel_enabled());
}

criterion_group!(benches, propagation);
criterion_main!(benches);
