use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ergolab::ergodic::estimate_ergodic_constant;
use ergolab::operators::eval_operator;
use ergolab::oracle1d::{ergodic_constant_1d, shoot_blowup};
use ergolab::solver::{solve_dirichlet, SolverConfig};
use ergolab::{ExponentPair, OperatorSpec, ScalarField, SymMatrix};
use ergolab_bench::*;

fn operators(c: &mut Criterion) {
    let m = sample_matrix();
    let family = vec![SymMatrix::diag(&[1.0, 1.0, 2.0]).unwrap(), SymMatrix::diag(&[2.0, 1.0, 1.5]).unwrap()];
    let specs = [
        OperatorSpec::trace(1.0).unwrap(),
        OperatorSpec::pucci_plus(1.0, 2.0).unwrap(),
        OperatorSpec::bellman_max(1.0, 2.0, family).unwrap(),
    ];
    for spec in &specs {
        c.bench_function(&format!("eval_operator/{}", spec.name()), |b| {
            b.iter(|| eval_operator(black_box(spec), black_box(&m)).unwrap())
        });
    }
}

fn solves(c: &mut Criterion) {
    let config = SolverConfig::default();
    let inst = interval_instance(1.0, 2.5, 1.0);
    let g = grid(&inst, 1.0 / 256.0);
    let zero = ScalarField::constant(0.0);
    c.bench_function("solve_dirichlet/1d_alpha1_h256", |b| {
        b.iter(|| solve_dirichlet(&inst, &g, &zero, &config).unwrap())
    });
    let sq = square_instance(1.0);
    let g2 = grid(&sq, 1.0 / 32.0);
    c.bench_function("solve_dirichlet/2d_pucci_h32", |b| {
        b.iter(|| solve_dirichlet(&sq, &g2, &zero, &config).unwrap())
    });
}

fn oracle(c: &mut Criterion) {
    let e = ExponentPair::new(0.0, 1.5).unwrap();
    let f = ScalarField::constant(0.0);
    c.bench_function("oracle1d/shoot", |b| b.iter(|| shoot_blowup(&e, black_box(-10.0), &f).unwrap()));
    c.bench_function("oracle1d/ergodic_constant", |b| b.iter(|| ergodic_constant_1d(&e, &f).unwrap()));
}

fn ergodic(c: &mut Criterion) {
    let exp = ergodic_experiment(1.5, 1.0 / 50.0);
    let mut group = c.benchmark_group("ergodic");
    group.sample_size(10);
    group.bench_function("estimate_h50", |b| b.iter(|| estimate_ergodic_constant(&exp, 1e-3).unwrap()));
    group.finish();
}

criterion_group!(benches, operators, solves, oracle, ergodic);
criterion_main!(benches);
