mod common;

use common::{fd_grad, linear_teacher, policy_divergence, teacher_window};
use poisonlab::environment::ContextRound;
use poisonlab::numerics::{Activation, Rng};
use poisonlab::surrogate::{retrain_due, softmax, ObservationWindow, SurrogateConfig, SurrogateModel};
use proptest::prelude::*;

fn small_cfg() -> SurrogateConfig {
    SurrogateConfig {
        hidden: vec![6, 5],
        ..SurrogateConfig::default()
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Q computed from raw weights without the library forward pass.
fn straight_line_q(m: &SurrogateModel, x: &[f64], a: usize) -> f64 {
    let net = m.backbone();
    let mut h = x.to_vec();
    for l in 0..net.num_layers() {
        let (w, b) = (net.weights(l), net.bias(l));
        let n_in = h.len();
        h = (0..b.len())
            .map(|o| {
                let z = b[o] + (0..n_in).map(|i| w[o * n_in + i] * h[i]).sum::<f64>();
                softplus(z)
            })
            .collect();
    }
    let r: f64 = m.reward_head(a).iter().zip(&h).map(|(w, v)| w * v).sum();
    let u: f64 = m.uncertainty_head(a).iter().zip(&h).map(|(w, v)| w * v).sum();
    r + m.beta() * softplus(u)
}

#[test]
fn q_matches_straight_line_evaluation() {
    let mut rng = Rng::new(51);
    let m = SurrogateModel::new(&small_cfg(), 3, 4, Rng::new(52)).unwrap();
    assert_eq!(m.backbone().activation(0), Activation::Softplus);
    for _ in 0..50 {
        let x = rng.unit_ball(3);
        for a in 0..4 {
            assert!((m.q_value(&x, a) - straight_line_q(&m, &x, a)).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_beta_q_is_reward() {
    let mut m = SurrogateModel::new(&small_cfg(), 3, 2, Rng::new(53)).unwrap();
    m.set_beta(0.0);
    let x = [0.1, -0.2, 0.3];
    assert_eq!(m.q_value(&x, 1), m.reward(&x, 1));
}

#[test]
fn uniform_q_gives_uniform_policy() {
    assert_eq!(softmax(&[0.7; 4], 1.0), vec![0.25; 4]);
}

#[test]
fn self_consistent_data_keeps_nll_from_rising() {
    let mut rng = Rng::new(54);
    let teacher = linear_teacher(3, 3, 1.0, &mut rng);
    let w = teacher_window(&teacher, 200, &mut rng);
    let mut m = teacher.clone();
    let start = m.nll(&w);
    let mut prev = start;
    for _ in 0..50 {
        let now = m.train(&w, 1);
        assert!(now <= prev + 1e-3, "{now} > {prev}");
        prev = now;
    }
    assert!(prev <= start + 1e-6);
}

#[test]
fn realizable_teacher_is_recovered() {
    let mut rng = Rng::new(55);
    let teacher = linear_teacher(4, 3, 1.5, &mut rng);
    let w = teacher_window(&teacher, 400, &mut rng);
    let cfg = SurrogateConfig {
        hidden: vec![],
        beta: 0.0,
        lr: 0.05,
        ..SurrogateConfig::default()
    };
    let mut m = SurrogateModel::new(&cfg, 4, 3, Rng::new(56)).unwrap();
    let (_, kl0) = policy_divergence(&teacher, &m, 2000, &mut Rng::new(57));
    m.fit(&w);
    let (tv, kl) = policy_divergence(&teacher, &m, 2000, &mut Rng::new(57));
    assert!(kl <= 0.05, "kl {kl} (untrained {kl0}), tv {tv}");
    assert!(kl < kl0);
}

#[test]
fn retrain_count_matches_schedule() {
    let (horizon, w, interval) = (5000, 400, 100);
    let count = (1..=horizon).filter(|&t| retrain_due(t, w, interval)).count();
    assert_eq!(count, (horizon - w) / interval);
}

#[test]
fn nll_gradient_matches_finite_differences() {
    let mut rng = Rng::new(58);
    let m = SurrogateModel::new(&small_cfg(), 3, 3, Rng::new(59)).unwrap();
    let samples: Vec<(ContextRound, usize)> = (0..20)
        .map(|t| (ContextRound::new(t, (0..3).map(|_| rng.unit_ball(3)).collect()).unwrap(), rng.below(3)))
        .collect();
    let (_, g) = m.nll_and_grad(&samples);
    let p0 = m.flat_params();
    let f = |p: &[f64]| {
        let mut probe = m.clone();
        probe.set_flat_params(p);
        probe.nll_and_grad(&samples).0
    };
    let fd = fd_grad(f, &p0, 1e-6);
    assert!(common::max_rel_err(&g, &fd, 1e-6) < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn policy_is_a_distribution(seed in any::<u64>(), tau in 0.01f64..100.0) {
        let mut m = SurrogateModel::new(&small_cfg(), 3, 5, Rng::new(seed)).unwrap();
        m.set_tau(tau).unwrap();
        let mut rng = Rng::new(seed ^ 1);
        let round = ContextRound::new(0, (0..5).map(|_| rng.unit_ball(3)).collect()).unwrap();
        let p = m.policy(&round);
        prop_assert!(p.iter().all(|v| *v >= 0.0 && v.is_finite()));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn higher_temperature_raises_entropy(q in prop::collection::vec(-5.0f64..5.0, 2..8), t in 0.1f64..5.0) {
        let h = |tau: f64| poisonlab::surrogate::entropy(&softmax(&q, tau));
        prop_assert!(h(2.0 * t) >= h(t) - 1e-12);
    }

    #[test]
    fn window_keeps_newest(cap in 1usize..30, n in 0usize..80) {
        let mut w = ObservationWindow::new(cap);
        for t in 0..n {
            w.push(ContextRound::new(t, vec![vec![0.0], vec![1.0]]).unwrap(), t % 2);
        }
        prop_assert_eq!(w.len(), n.min(cap));
        let ts: Vec<usize> = w.iter().map(|(r, _)| r.t).collect();
        let want: Vec<usize> = (n.saturating_sub(cap)..n).collect();
        prop_assert_eq!(ts, want);
    }
}
