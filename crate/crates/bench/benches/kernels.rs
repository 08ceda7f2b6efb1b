use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use morinflow::genericity::{rank_test, versality_check};
use morinflow::jets::{psi_chain, SmoothHandle};
use morinflow::linalg::DEFAULT_RANK_TOL;
use morinflow::polyparam::{real_roots_with_mult, ParamPoly, ROOT_TOL};
use morinflow::sweep::empirical_pattern_census;
use morinflow::{ConfluentSystem, ModelSpec, MultiPoly, ProductFactor, Variant};

fn roots(c: &mut Criterion) {
    // (u - 1)^3 (u + 0.5)^2 u (u^2 + u + 1)^2, degree 10.
    let p = [(-1.0, 3), (0.5, 2), (0.0, 1)].iter().fold(
        ParamPoly::new(vec![1.0, 1.0, 1.0]).pow(2),
        |acc, &(c, m)| &acc * &ParamPoly::new(vec![c, 1.0]).pow(m),
    );
    c.bench_function("real_roots_with_mult/degree10", |b| {
        b.iter(|| real_roots_with_mult(black_box(&p), ROOT_TOL).unwrap())
    });
}

fn genericity(c: &mut Criterion) {
    let sys = ConfluentSystem::new(vec![-1.5, -0.2, 0.9, 1.8], vec![3, 2, 2, 3], 10).unwrap();
    c.bench_function("rank_test/d10", |b| {
        b.iter(|| rank_test(black_box(&sys), DEFAULT_RANK_TOL))
    });
    let factors = [(0.0, 3), (2.0, 2), (4.0, 3)]
        .iter()
        .map(|&(alpha, j)| ProductFactor {
            alpha,
            j,
            x: vec![0.0; j - 1],
        })
        .collect();
    let m = ModelSpec::product(factors, Variant::PgeqEplus, 5).unwrap();
    c.bench_function("versality_check/product", |b| {
        b.iter(|| versality_check(black_box(&m), DEFAULT_RANK_TOL).unwrap())
    });
}

fn jets(c: &mut Criterion) {
    // Field (1, y) on the plane, z = y^2 - x.
    let one = MultiPoly::constant(2, 1.0);
    let y = MultiPoly::var(2, 1);
    let z = &(&y * &y) - &MultiPoly::var(2, 0);
    let field: [&dyn SmoothHandle; 2] = [&one, &y];
    c.bench_function("psi_chain/depth6", |b| {
        b.iter(|| psi_chain(&field, &z, black_box(&[0.3, -0.2]), 6).unwrap())
    });
}

fn census(c: &mut Criterion) {
    let m = ModelSpec::morin(4, vec![0.0; 3], Variant::PgeqEplus, 3).unwrap();
    let mut g = c.benchmark_group("census");
    g.sample_size(10);
    g.bench_function("p4/10000", |b| {
        b.iter(|| empirical_pattern_census(&m, 0.5, 10_000, black_box(7)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, roots, genericity, jets, census);
criterion_main!(benches);
