use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use poisonlab::numerics::linalg::cholesky_solve;
use poisonlab::numerics::Rng;
use poisonlab::perturber::{pgd, AttackObjective, NormGrouping, PerturbConfig};
use poisonlab_bench::{fitted_surrogate, gp, mlp, round, spd};

fn mlp_passes(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let net = mlp(10, &[128, 64], &mut rng);
    let x = rng.unit_ball(10);
    c.bench_function("mlp_forward_128x64", |b| b.iter(|| net.forward(black_box(&x)).unwrap()));
    c.bench_function("mlp_input_grad_128x64", |b| b.iter(|| net.input_grad(black_box(&x), &[1.0]).unwrap()));
}

fn cholesky(c: &mut Criterion) {
    let mut g = c.benchmark_group("cholesky_solve");
    for n in [50, 200, 400] {
        let mut rng = Rng::new(n as u64);
        let a = spd(n, &mut rng);
        let rhs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| cholesky_solve(black_box(&a), n, &rhs).unwrap())
        });
    }
    g.finish();
}

fn gp_posterior(c: &mut Criterion) {
    let mut g = c.benchmark_group("gp_posterior");
    for n in [50, 200] {
        let mut rng = Rng::new(3);
        let state = gp(n, &mut rng);
        let z: Vec<f64> = (0..15).map(|_| rng.uniform()).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| state.posterior(black_box(&z))));
    }
    g.finish();
    let mut rng = Rng::new(4);
    let state = gp(100, &mut rng);
    let s = [0.5; 12];
    c.bench_function("gp_select_lambda_n100", |b| {
        b.iter(|| state.select_lambda(black_box(&s), &mut rng))
    });
}

fn perturbation(c: &mut Criterion) {
    let mut rng = Rng::new(5);
    let (m, stats) = fitted_surrogate(10, 5, &mut rng);
    let r = round(10, 5, &mut rng);
    let prev = vec![vec![0.0; 10]; 5];
    let cfg = PerturbConfig::default();
    c.bench_function("pgd_100_iterations", |b| {
        b.iter(|| {
            let obj = AttackObjective::new(&m, &stats, &r, 0, [0.5, 0.3, 0.2], &prev, NormGrouping::Stealth);
            pgd(black_box(&obj), &cfg)
        })
    });
}

criterion_group!(kernels, mlp_passes, cholesky, gp_posterior, perturbation);
criterion_main!(kernels);
