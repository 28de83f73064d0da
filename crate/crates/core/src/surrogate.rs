//! UCB-aware maximum-entropy inverse reinforcement learning surrogate.
//!
//! A shared backbone `f` feeds two linear head families per arm: a reward
//! head `h(x, a) = w_a . f(x)` and an uncertainty head
//! `s(x, a) = softplus(v_a . f(x))`. The surrogate Q-value
//! `h + beta * s` mirrors an optimistic learner, and the policy is a
//! softmax of Q over the arms of a round, each arm scored on its own context.

use std::collections::VecDeque;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::environment::ContextRound;
use crate::error::{Error, Result};
use crate::numerics::linalg::dot;
use crate::numerics::mlp::{sigmoid, softplus};
use crate::numerics::{Activation, Adam, AdamConfig, Mlp, Rng, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub beta: f64,
    pub tau: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub clip_norm: f64,
    pub weight_decay: f64,
    /// Cosine period in optimizer steps; `0` disables annealing.
    pub cosine_t_max: u64,
    /// Observation window size; defaults to `min(400, floor(0.08 T))`.
    pub window: Option<usize>,
    /// Retraining interval; defaults to `floor(W / 4)`.
    pub retrain_interval: Option<usize>,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            activation: Activation::Softplus,
            beta: 1.0,
            tau: 1.0,
            lr: 1e-3,
            steps: 500,
            batch: 64,
            clip_norm: 1.0,
            weight_decay: 1e-5,
            cosine_t_max: 500,
            window: None,
            retrain_interval: None,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::config("attacker.surrogate.hidden", "widths must be positive"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::config("attacker.surrogate.tau", "temperature must be positive"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::config("attacker.surrogate.beta", "must be non-negative"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("attacker.surrogate.lr", "must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::config("attacker.surrogate.batch", "must be positive"));
        }
        if self.window == Some(0) {
            return Err(Error::config("attacker.surrogate.window", "must be positive"));
        }
        if self.retrain_interval == Some(0) {
            return Err(Error::config("attacker.surrogate.retrain_interval", "must be positive"));
        }
        Ok(())
    }

    pub fn window_size(&self, horizon: usize) -> usize {
        self.window
            .unwrap_or_else(|| default_window(horizon))
            .max(1)
    }

    pub fn interval(&self, horizon: usize) -> usize {
        self.retrain_interval
            .unwrap_or_else(|| (self.window_size(horizon) / 4).max(1))
    }
}

/// `min(400, floor(0.08 T))`, at least 1.
pub fn default_window(horizon: usize) -> usize {
    (horizon * 8 / 100).min(400).max(1)
}

/// True iff a retraining is due at 1-indexed round `t`.
pub fn retrain_due(t: usize, window: usize, interval: usize) -> bool {
    t > window && interval > 0 && t % interval == 0
}

/// Sliding window of `(shown round, chosen arm)` pairs.
#[derive(Debug, Clone)]
pub struct ObservationWindow {
    cap: usize,
    items: VecDeque<(ContextRound, usize)>,
}

impl ObservationWindow {
    pub fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            items: VecDeque::with_capacity(cap.max(1)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn push(&mut self, round: ContextRound, arm: usize) {
        if self.items.len() == self.cap {
            self.items.pop_front();
        }
        self.items.push_back((round, arm));
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ContextRound, usize)> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> &(ContextRound, usize) {
        &self.items[i]
    }
}

/// Softmax of `q / tau` with max subtraction.
pub fn softmax(q: &[f64], tau: f64) -> Vec<f64> {
    let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = q.iter().map(|v| ((v - m) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct SurrogateModel {
    backbone: Mlp,
    k: usize,
    dh: usize,
    /// `K x d_h` reward heads.
    w: Vec<f64>,
    /// `K x d_h` uncertainty heads.
    v: Vec<f64>,
    beta: f64,
    tau: f64,
    steps: usize,
    batch: usize,
    adam: Adam,
    rng: Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl SurrogateModel {
    pub fn new(cfg: &SurrogateConfig, d: usize, k: usize, mut rng: Rng) -> Result<Self> {
        cfg.validate()?;
        let backbone = if cfg.hidden.is_empty() {
            let mut m = Mlp::zeros(&[d, d], &[Activation::Identity])?;
            for i in 0..d {
                m.weights_mut(0)[i * d + i] = 1.0;
            }
            m
        } else {
            let mut sizes = vec![d];
            sizes.extend_from_slice(&cfg.hidden);
            let acts = vec![cfg.activation; cfg.hidden.len()];
            Mlp::new(&sizes, &acts, &mut rng)?
        };
        let dh = backbone.output_dim();
        let bound = (3.0 / dh as f64).sqrt();
        let w = (0..k * dh).map(|_| rng.uniform_in(-bound, bound)).collect();
        let v = (0..k * dh).map(|_| rng.uniform_in(-bound, bound)).collect();
        let n = backbone.num_params() + 2 * k * dh;
        let adam = Adam::new(
            n,
            AdamConfig {
                lr: cfg.lr,
                weight_decay: cfg.weight_decay,
                clip_norm: cfg.clip_norm,
                cosine_t_max: cfg.cosine_t_max,
                ..AdamConfig::default()
            },
        );
        Ok(Self {
            backbone,
            k,
            dh,
            w,
            v,
            beta: cfg.beta,
            tau: cfg.tau,
            steps: cfg.steps,
            batch: cfg.batch,
            adam,
            rng,
            order: Vec::new(),
            cursor: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn input_dim(&self) -> usize {
        self.backbone.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.dh
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn set_tau(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0) {
            return Err(Error::config("attacker.surrogate.tau", "temperature must be positive"));
        }
        self.tau = tau;
        Ok(())
    }

    pub fn backbone(&self) -> &Mlp {
        &self.backbone
    }

    pub fn backbone_mut(&mut self) -> &mut Mlp {
        &mut self.backbone
    }

    pub fn reward_head(&self, a: usize) -> &[f64] {
        &self.w[a * self.dh..(a + 1) * self.dh]
    }

    pub fn reward_head_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.w[a * self.dh..(a + 1) * self.dh]
    }

    pub fn uncertainty_head(&self, a: usize) -> &[f64] {
        &self.v[a * self.dh..(a + 1) * self.dh]
    }

    pub fn uncertainty_head_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.v[a * self.dh..(a + 1) * self.dh]
    }

    /// All trainable parameters: backbone, reward heads, uncertainty heads.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.backbone.params().to_vec();
        p.extend_from_slice(&self.w);
        p.extend_from_slice(&self.v);
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let nb = self.backbone.num_params();
        let nh = self.k * self.dh;
        assert_eq!(p.len(), nb + 2 * nh, "surrogate parameter length");
        self.backbone.params_mut().copy_from_slice(&p[..nb]);
        self.w.copy_from_slice(&p[nb..nb + nh]);
        self.v.copy_from_slice(&p[nb + nh..]);
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        self.backbone.forward_unchecked(x)
    }

    /// Reward head `w_a . f(x)`.
    pub fn reward(&self, x: &[f64], a: usize) -> f64 {
        dot(self.reward_head(a), &self.features(x))
    }

    /// Uncertainty head `softplus(v_a . f(x))`.
    pub fn sigma(&self, x: &[f64], a: usize) -> f64 {
        softplus(dot(self.uncertainty_head(a), &self.features(x)))
    }

    pub fn q_value(&self, x: &[f64], a: usize) -> f64 {
        let f = self.features(x);
        self.q_from_features(&f, a)
    }

    /// Q from precomputed backbone features.
    pub fn q_from_features(&self, f: &[f64], a: usize) -> f64 {
        dot(self.reward_head(a), f) + self.beta * softplus(dot(self.uncertainty_head(a), f))
    }

    pub fn reward_from_features(&self, f: &[f64], a: usize) -> f64 {
        dot(self.reward_head(a), f)
    }

    /// Q of every arm, each on its own context.
    pub fn q_values(&self, round: &ContextRound) -> Vec<f64> {
        round
            .contexts
            .iter()
            .enumerate()
            .map(|(a, x)| self.q_value(x, a))
            .collect()
    }

    /// Reward-head estimates of every arm on its own context.
    pub fn rewards(&self, round: &ContextRound) -> Vec<f64> {
        round
            .contexts
            .iter()
            .enumerate()
            .map(|(a, x)| self.reward(x, a))
            .collect()
    }

    pub fn policy(&self, round: &ContextRound) -> Vec<f64> {
        softmax(&self.q_values(round), self.tau)
    }

    /// `grad_x h(x, a)`.
    pub fn reward_input_grad(&self, x: &[f64], a: usize) -> Vec<f64> {
        let tr = self.backbone.trace_unchecked(x);
        self.backbone.backward_unchecked(&tr, self.reward_head(a), None)
    }

    /// `(Q(x, a), grad_x Q(x, a))`.
    pub fn q_input_grad(&self, x: &[f64], a: usize) -> (f64, Vec<f64>) {
        let tr = self.backbone.trace_unchecked(x);
        let f = tr.output();
        let u = dot(self.uncertainty_head(a), f);
        let q = dot(self.reward_head(a), f) + self.beta * softplus(u);
        let s = self.beta * sigmoid(u);
        let up: Vec<f64> = self
            .reward_head(a)
            .iter()
            .zip(self.uncertainty_head(a))
            .map(|(w, v)| w + s * v)
            .collect();
        (q, self.backbone.backward_unchecked(&tr, &up, None))
    }

    /// Negative log-likelihood of one observation and, optionally, its
    /// parameter gradient accumulated into `grad` (flat layout) with `scale`.
    fn sample_nll(&self, round: &ContextRound, arm: usize, grad: Option<(&mut [f64], f64)>) -> f64 {
        let traces: Vec<Trace> = round
            .contexts
            .iter()
            .map(|x| self.backbone.trace_unchecked(x))
            .collect();
        let q: Vec<f64> = traces
            .iter()
            .enumerate()
            .map(|(a, tr)| self.q_from_features(tr.output(), a))
            .collect();
        let pi = softmax(&q, self.tau);
        let nll = -pi[arm].max(1e-300).ln();
        if let Some((g, scale)) = grad {
            let nb = self.backbone.num_params();
            let nh = self.k * self.dh;
            let (gb, gh) = g.split_at_mut(nb);
            let (gw, gv) = gh.split_at_mut(nh);
            for (b, tr) in traces.iter().enumerate() {
                let dq = scale * (pi[b] - if b == arm { 1.0 } else { 0.0 }) / self.tau;
                if dq == 0.0 {
                    continue;
                }
                let f = tr.output();
                let wb = self.reward_head(b);
                let vb = self.uncertainty_head(b);
                let s = self.beta * sigmoid(dot(vb, f));
                for j in 0..self.dh {
                    gw[b * self.dh + j] += dq * f[j];
                    gv[b * self.dh + j] += dq * s * f[j];
                }
                let up: Vec<f64> = wb.iter().zip(vb).map(|(w, v)| dq * (w + s * v)).collect();
                self.backbone.backward_unchecked(tr, &up, Some(gb));
            }
        }
        nll
    }

    /// Mean negative log-likelihood over a window.
    pub fn nll(&self, window: &ObservationWindow) -> f64 {
        if window.is_empty() {
            return 0.0;
        }
        window.iter().map(|(r, a)| self.sample_nll(r, *a, None)).sum::<f64>() / window.len() as f64
    }

    /// Mean NLL of a set of samples and its gradient in the flat layout.
    pub fn nll_and_grad(&self, samples: &[(ContextRound, usize)]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.backbone.num_params() + 2 * self.k * self.dh];
        let n = samples.len().max(1) as f64;
        let mut total = 0.0;
        for (r, a) in samples {
            total += self.sample_nll(r, *a, Some((&mut g, 1.0 / n)));
        }
        (total / n, g)
    }

    fn next_batch(&mut self, n: usize) -> Vec<usize> {
        if self.order.len() != n {
            self.order = (0..n).collect();
            self.rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let b = self.batch.min(n);
        let mut out = Vec::with_capacity(b);
        while out.len() < b {
            if self.cursor == n {
                self.rng.shuffle(&mut self.order);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    /// `steps` Adam steps on the window likelihood, warm-started from the
    /// current parameters. Returns the final mean NLL over the window.
    pub fn train(&mut self, window: &ObservationWindow, steps: usize) -> f64 {
        if window.is_empty() {
            warn!("surrogate training skipped: empty window");
            return 0.0;
        }
        let n = window.len();
        self.order.clear();
        self.adam.restart_schedule();
        let mut params = self.flat_params();
        let mut g = vec![0.0; params.len()];
        for _ in 0..steps {
            let idx = self.next_batch(n);
            g.iter_mut().for_each(|v| *v = 0.0);
            let scale = 1.0 / idx.len() as f64;
            for &i in &idx {
                let (r, a) = window.get(i);
                self.sample_nll(r, *a, Some((&mut g, scale)));
            }
            self.adam.step(&mut params, &g);
            self.set_flat_params(&params);
        }
        self.nll(window)
    }

    /// Train for the configured number of steps.
    pub fn fit(&mut self, window: &ObservationWindow) -> f64 {
        let steps = self.steps;
        self.train(window, steps)
    }

    /// Retrain iff due at 1-indexed round `t`; returns whether it ran.
    pub fn maybe_retrain(&mut self, window: &ObservationWindow, t: usize, w: usize, interval: usize) -> bool {
        if retrain_due(t, w, interval) {
            self.fit(window);
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(d: usize, k: usize) -> SurrogateModel {
        let cfg = SurrogateConfig {
            hidden: vec![6, 5],
            ..SurrogateConfig::default()
        };
        SurrogateModel::new(&cfg, d, k, Rng::new(11)).unwrap()
    }

    #[test]
    fn zero_uncertainty_head_adds_beta_log_two() {
        let mut m = small(3, 2);
        m.uncertainty_head_mut(1).iter_mut().for_each(|v| *v = 0.0);
        let x = [0.2, -0.1, 0.4];
        let q = m.q_value(&x, 1);
        assert!((q - (m.reward(&x, 1) + m.beta() * 2f64.ln())).abs() < 1e-12);
        m.set_beta(0.0);
        assert_eq!(m.q_value(&x, 1), m.reward(&x, 1));
    }

    #[test]
    fn hand_softmax() {
        let p = softmax(&[1.0, 0.0, 0.0], 1.0);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 2.0)).abs() < 1e-12);
        assert!((p[1] - 1.0 / (e + 2.0)).abs() < 1e-12);
        assert!((p[0] - 0.5761).abs() < 1e-4);
    }

    #[test]
    fn high_temperature_is_near_uniform() {
        let p = softmax(&[3.0, -1.0, 0.5, 2.0], 1e6);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-3));
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        let mut m = small(2, 2);
        assert!(m.set_tau(0.0).is_err());
    }

    #[test]
    fn retrain_schedule() {
        assert!(!retrain_due(100, 400, 100));
        assert!(retrain_due(500, 400, 100));
        assert!(!retrain_due(400, 400, 100));
        let count = (1..=5000).filter(|&t| retrain_due(t, 400, 100)).count();
        assert_eq!(count, (5000 - 400) / 100);
        assert_eq!(default_window(5000), 400);
        assert_eq!(default_window(2000), 160);
    }

    #[test]
    fn window_is_bounded_and_ordered() {
        let mut w = ObservationWindow::new(3);
        for t in 0..5 {
            w.push(ContextRound::new(t, vec![vec![0.0], vec![1.0]]).unwrap(), 0);
        }
        assert_eq!(w.len(), 3);
        let ts: Vec<usize> = w.iter().map(|(r, _)| r.t).collect();
        assert_eq!(ts, vec![2, 3, 4]);
    }

    #[test]
    fn empty_window_training_is_a_no_op() {
        let mut m = small(2, 2);
        let before = m.flat_params();
        m.train(&ObservationWindow::new(4), 10);
        assert_eq!(m.flat_params(), before);
    }

    #[test]
    fn sigma_is_non_negative() {
        let m = small(3, 3);
        let mut rng = Rng::new(2);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| 10.0 * rng.normal()).collect();
            for a in 0..3 {
                assert!(m.sigma(&x, a) >= 0.0);
            }
        }
    }
}
