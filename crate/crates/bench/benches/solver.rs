use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;
use std::hint::black_box;
use teven_bench::{butterfly, fresh_decomposition, linearization, SHIFTS};
use teven_core::ratarnoldi::expand;
use teven_core::{generate_gyroscopic, run, run_reverse, FactorCache, SolverConfig};

fn expansion(c: &mut Criterion) {
    let lin = linearization(&butterfly(10));
    let mut g = c.benchmark_group("expand_20_steps");
    for (name, zeta) in SHIFTS {
        let mut cache = FactorCache::new();
        cache.get(&lin, zeta).unwrap();
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut dec = fresh_decomposition(lin.dim(), 7);
                expand(&mut dec, &lin, &[zeta], 20, &mut cache).unwrap();
                dec
            })
        });
    }
    g.finish();
}

fn butterfly_run(c: &mut Criterion) {
    let mut g = c.benchmark_group("butterfly_run");
    g.sample_size(10);
    for m in [6, 10] {
        let p = butterfly(m);
        let mut cfg = SolverConfig::new(12);
        cfg.initial_shift = Complex64::new(0.5, 2.0);
        g.bench_with_input(BenchmarkId::from_parameter(m * m), &p, |b, p| {
            b.iter(|| run(black_box(p), &cfg).unwrap())
        });
    }
    g.finish();
}

fn gyroscopic_reverse(c: &mut Criterion) {
    let mut g = c.benchmark_group("gyroscopic_reverse");
    g.sample_size(10);
    let p = generate_gyroscopic(30, 0).unwrap();
    let cfg = SolverConfig::new(6);
    g.bench_function("n30_M6", |b| b.iter(|| run_reverse(black_box(&p), &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, expansion, butterfly_run, gyroscopic_reverse);
criterion_main!(benches);
