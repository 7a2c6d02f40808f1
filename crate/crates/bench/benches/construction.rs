use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use drawstring::certifier::{certify_with, CertifyOptions};
use drawstring::drawstring::{build, DrawstringSpec, Method};
use drawstring::flat_torus::{convolve, Density, FlatTorus, GreenEvaluator};
use num_complex::Complex64;
use std::hint::black_box;

fn constructions(c: &mut Criterion) {
    let mut g = c.benchmark_group("build");
    g.sample_size(10);
    for method in [Method::A, Method::B] {
        let spec = DrawstringSpec::new(0.0, 0.1, 0.1, 1e-3, method);
        g.bench_function(format!("{method:?}"), |b| b.iter(|| build(black_box(&spec)).unwrap()));
    }
    g.finish();
}

fn certification(c: &mut Criterion) {
    let mut g = c.benchmark_group("certify");
    g.sample_size(10);
    for method in [Method::A, Method::B] {
        let d = build(&DrawstringSpec::new(0.0, 0.1, 0.1, 1e-3, method)).unwrap();
        let opts = CertifyOptions::default();
        g.bench_function(format!("{method:?}"), |b| b.iter(|| certify_with(&d.profile, &d.spec, Some(&d.params), opts)));
    }
    g.finish();
}

fn torus(c: &mut Criterion) {
    let t = FlatTorus::new(Complex64::new(0.5, 1.0), 3.0).unwrap();
    let ev = GreenEvaluator::new(t);
    c.bench_function("green/point", |b| b.iter(|| ev.green(black_box([0.31, 0.27]), [0.0, 0.0]).unwrap()));
    let mut g = c.benchmark_group("green");
    g.sample_size(10);
    g.bench_function("convolve_64", |b| {
        b.iter_batched(|| Density::opposite_masses(&t).sample(&t, 64), |f| convolve(&ev, &f, 64).unwrap(), BatchSize::LargeInput)
    });
    g.finish();
}

criterion_group!(benches, constructions, certification, torus);
criterion_main!(benches);
