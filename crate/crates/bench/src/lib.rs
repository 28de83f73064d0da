//! Fixtures shared by the kernel benchmarks.

use poisonlab::environment::ContextRound;
use poisonlab::features::{self, GradientStats};
use poisonlab::gp::{GpConfig, GpState};
use poisonlab::numerics::{Activation, Mlp, Rng};
use poisonlab::surrogate::{ObservationWindow, SurrogateConfig, SurrogateModel};

/// Random SPD matrix `A A^T / n + I`.
pub fn spd(n: usize, rng: &mut Rng) -> Vec<f64> {
    let a: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum();
            m[i * n + j] = s / n as f64 + if i == j { 1.0 } else { 0.0 };
        }
    }
    m
}

pub fn mlp(d: usize, hidden: &[usize], rng: &mut Rng) -> Mlp {
    Mlp::with_hidden(d, hidden, 1, Activation::Relu, Activation::Identity, rng).expect("valid shape")
}

/// GP with `n` random observations on 15-dimensional inputs.
pub fn gp(n: usize, rng: &mut Rng) -> GpState {
    let mut g = GpState::new(GpConfig::default()).expect("default config");
    for _ in 0..n {
        let z: Vec<f64> = (0..15).map(|_| rng.uniform()).collect();
        g.observe(z, rng.uniform()).expect("factorizes");
    }
    g
}

pub fn round(d: usize, k: usize, rng: &mut Rng) -> ContextRound {
    ContextRound::new(0, (0..k).map(|_| rng.unit_ball(d)).collect()).expect("valid round")
}

/// A surrogate fitted on a short random window, with its gradient statistics.
pub fn fitted_surrogate(d: usize, k: usize, rng: &mut Rng) -> (SurrogateModel, GradientStats) {
    let cfg = SurrogateConfig {
        hidden: vec![32, 32],
        steps: 50,
        ..SurrogateConfig::default()
    };
    let mut m = SurrogateModel::new(&cfg, d, k, rng.fork(7)).expect("valid config");
    let mut w = ObservationWindow::new(100);
    for t in 0..100 {
        let mut r = round(d, k, rng);
        r.t = t;
        let arm = rng.below(k);
        w.push(r, arm);
    }
    m.fit(&w);
    let stats = features::update_stats(&m, &w);
    (m, stats)
}
