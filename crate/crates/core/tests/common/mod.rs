//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use poisonlab::numerics::Rng;

/// Dense Gaussian elimination with partial pivoting.
pub fn lu_solve(a: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a[i * n..(i + 1) * n].to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
            .unwrap();
        m.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// Dense inverse by solving against unit vectors.
pub fn lu_inverse(a: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = lu_solve(a, n, &e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    inv
}

/// Random SPD matrix `A A^T / n + shift I`.
pub fn random_spd(n: usize, shift: f64, rng: &mut Rng) -> Vec<f64> {
    let a: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum::<f64>() / n as f64;
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
        m[i * n + i] += shift;
    }
    m
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = p[i];
            p[i] = x0 + h;
            let fp = f(&p);
            p[i] = x0 - h;
            let fm = f(&p);
            p[i] = x0;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel_err(*x, *y, floor)).fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..a.len() / n).map(|i| dot(&a[i * n..(i + 1) * n], x)).collect()
}

use poisonlab::environment::ContextRound;
use poisonlab::features::GradientStats;
use poisonlab::surrogate::{SurrogateConfig, SurrogateModel};

/// Random softplus surrogate with warm gradient statistics and a round.
pub fn random_attack_instance(seed: u64, d: usize, k: usize) -> (SurrogateModel, GradientStats, ContextRound) {
    let cfg = SurrogateConfig {
        hidden: vec![8, 6],
        ..SurrogateConfig::default()
    };
    let m = SurrogateModel::new(&cfg, d, k, Rng::new(seed)).unwrap();
    let mut rng = Rng::new(seed ^ 0x5eed);
    let grads: Vec<Vec<f64>> = (0..40)
        .map(|_| {
            let x = rng.unit_ball(d);
            m.reward_input_grad(&x, rng.below(k))
        })
        .collect();
    let stats = GradientStats::from_gradients(&grads, d);
    let round = ContextRound::new(0, (0..k).map(|_| rng.unit_ball(d)).collect()).unwrap();
    (m, stats, round)
}

/// Linear surrogate on `d = 2` with identity backbone and `beta = 0`, so the
/// attack loss is a convex log-sum-exp plus quadratic in the target context.
pub fn quadratic_toy() -> (SurrogateModel, GradientStats, ContextRound) {
    let cfg = SurrogateConfig {
        hidden: vec![],
        beta: 0.0,
        ..SurrogateConfig::default()
    };
    let mut m = SurrogateModel::new(&cfg, 2, 3, Rng::new(0)).unwrap();
    let heads = [[1.0, -0.5], [-0.3, 0.8], [0.2, 0.1]];
    for (a, h) in heads.iter().enumerate() {
        m.reward_head_mut(a).copy_from_slice(h);
        m.uncertainty_head_mut(a).iter_mut().for_each(|v| *v = 0.0);
    }
    let round = ContextRound::new(0, vec![vec![0.2, 0.1], vec![-0.1, 0.3], vec![0.4, -0.2]]).unwrap();
    (m, GradientStats::cold(2), round)
}

use poisonlab::surrogate::{softmax, ObservationWindow};

/// Realizable softmax-linear teacher: identity backbone, `beta = 0`, heads
/// drawn from `N(0, scale^2)`.
pub fn linear_teacher(d: usize, k: usize, scale: f64, rng: &mut Rng) -> SurrogateModel {
    let cfg = SurrogateConfig {
        hidden: vec![],
        beta: 0.0,
        ..SurrogateConfig::default()
    };
    let mut m = SurrogateModel::new(&cfg, d, k, rng.fork(0)).unwrap();
    for a in 0..k {
        m.reward_head_mut(a).iter_mut().for_each(|v| *v = scale * rng.normal());
        m.uncertainty_head_mut(a).iter_mut().for_each(|v| *v = 0.0);
    }
    m
}

/// Window of `n` rounds whose actions are sampled from `teacher`.
pub fn teacher_window(teacher: &SurrogateModel, n: usize, rng: &mut Rng) -> ObservationWindow {
    let (d, k) = (teacher.input_dim(), teacher.k());
    let mut w = ObservationWindow::new(n);
    for t in 0..n {
        let round = ContextRound::new(t, (0..k).map(|_| rng.unit_ball(d)).collect()).unwrap();
        let a = rng.categorical(&teacher.policy(&round));
        w.push(round, a);
    }
    w
}

/// Mean total-variation and KL(teacher || student) over fresh rounds.
pub fn policy_divergence(teacher: &SurrogateModel, student: &SurrogateModel, n: usize, rng: &mut Rng) -> (f64, f64) {
    let (d, k) = (teacher.input_dim(), teacher.k());
    let (mut tv, mut kl) = (0.0, 0.0);
    for t in 0..n {
        let round = ContextRound::new(t, (0..k).map(|_| rng.unit_ball(d)).collect()).unwrap();
        let p = softmax(&teacher.q_values(&round), teacher.tau());
        let q = softmax(&student.q_values(&round), student.tau());
        tv += 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
        kl += p.iter().zip(&q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum::<f64>();
    }
    (tv / n as f64, kl / n as f64)
}
