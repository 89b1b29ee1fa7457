use std::hint::black_box;

use chns_bench::default_setup;
use chns_core::trudinger_moser::{calibrate_c, default_a_grid, TestFunctionFamily};
use chns_core::Grid;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn bench_advance(c: &mut Criterion) {
    let mut group = c.benchmark_group("advance");
    group.sample_size(20);
    for n in [32usize, 64] {
        let (sys, state) = default_setup(n);
        let dt = sys.cfl_dt(&state).unwrap();
        group.throughput(Throughput::Elements((n * n) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &state, |b, s| {
            b.iter(|| sys.advance(black_box(s), dt).unwrap())
        });
    }
    group.finish();
}

fn bench_cfl(c: &mut Criterion) {
    let (sys, state) = default_setup(64);
    c.bench_function("cfl_dt/64", |b| b.iter(|| sys.cfl_dt(black_box(&state)).unwrap()));
}

fn bench_calibration(c: &mut Criterion) {
    let family = TestFunctionFamily::generate(Grid::square(32), 7, 64);
    let a_grid = default_a_grid(Some(std::f64::consts::PI));
    let mut group = c.benchmark_group("calibrate_c");
    group.sample_size(10);
    group.bench_function("32x32/64 members", |b| {
        b.iter(|| calibrate_c(black_box(&family), &a_grid).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_advance, bench_cfl, bench_calibration);
criterion_main!(benches);
