use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dsic_core::basis::{build_measurement_matrix, BasisConfig, BasisKind};
use dsic_core::canceller::ls_estimate;
use dsic_core::pilot::gram_spectrum;
use dsic_core::signals::gen_gaussian_sequence;

fn measurement_matrix(c: &mut Criterion) {
    let mut g = c.benchmark_group("measurement_matrix");
    let x = gen_gaussian_sequence(512, 1).unwrap();
    for kind in [BasisKind::Ph, BasisKind::Glp, BasisKind::PhIq] {
        let cfg = BasisConfig::new(9, 8, kind).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(format!("{kind:?}")), &cfg, |b, cfg| {
            b.iter(|| build_measurement_matrix(black_box(&x), cfg).unwrap())
        });
    }
    g.finish();
}

fn ls_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("ls_solve");
    for order in [3, 9] {
        let cfg = BasisConfig::new(order, 8, BasisKind::Glp).unwrap();
        let m = build_measurement_matrix(&gen_gaussian_sequence(512, 2).unwrap(), &cfg).unwrap();
        let r = gen_gaussian_sequence(m.rows(), 3).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(order), &m, |b, m| {
            b.iter(|| ls_estimate(m, black_box(&r)).unwrap())
        });
    }
    g.finish();
}

fn spectrum(c: &mut Criterion) {
    let cfg = BasisConfig::new(9, 8, BasisKind::Glp).unwrap();
    let m = build_measurement_matrix(&gen_gaussian_sequence(512, 4).unwrap(), &cfg).unwrap();
    c.bench_function("gram_spectrum", |b| b.iter(|| gram_spectrum(black_box(&m)).unwrap()));
}

criterion_group!(benches, measurement_matrix, ls_solve, spectrum);
criterion_main!(benches);
