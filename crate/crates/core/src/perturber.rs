//! Perturbations of the shown contexts under an l-infinity budget.
//!
//! The objective combines four terms on the surrogate:
//!
//! * `L_eff = -ln pi(target | x + delta)`, the effectiveness loss;
//! * `R_s`, the squared Mahalanobis distance of the perturbed target-context
//!   reward gradient from the clean gradient statistics;
//! * `R_n = (|g(x + delta)| - |g(x)|)^2`, the change in gradient norm;
//! * `R_t = |delta - delta_prev|^2`, the temporal smoothness term.
//!
//! `R_s` and `R_n` depend on the input gradient, so their own gradients need
//! a Hessian-vector product of the reward head. It is taken as a central
//! difference of the analytic input gradient.

use serde::{Deserialize, Serialize};

use crate::environment::ContextRound;
use crate::error::{Error, Result};
use crate::features::{max_q_arm, GradientStats};
use crate::gp::AttackParams;
use crate::numerics::linalg::norm2;
use crate::numerics::Rng;
use crate::surrogate::{softmax, SurrogateModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbMethod {
    Pgd,
    Nes,
    Random,
}

/// Which weight multiplies the gradient-norm term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormGrouping {
    /// `lambda_1 L_eff + lambda_2 (R_s + R_n) + lambda_3 R_t`
    Stealth,
    /// `lambda_1 (L_eff + R_n) + lambda_2 R_s + lambda_3 R_t`
    Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbConfig {
    pub method: PerturbMethod,
    pub epsilon: f64,
    pub iterations: usize,
    pub step: f64,
    /// Stop after this many consecutive loss increases.
    pub patience: usize,
    pub nes_samples: usize,
    pub nes_sigma: f64,
    pub nes_iterations: usize,
    pub nes_step: f64,
    pub random_samples: usize,
    /// Perturb only the target arm's context.
    pub target_only: bool,
    pub grouping: NormGrouping,
    pub hvp_step: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            method: PerturbMethod::Pgd,
            epsilon: 0.3,
            iterations: 100,
            step: 0.02,
            patience: 10,
            nes_samples: 50,
            nes_sigma: 0.01,
            nes_iterations: 100,
            nes_step: 0.02,
            random_samples: 500,
            target_only: false,
            grouping: NormGrouping::Stealth,
            hvp_step: 1e-4,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::config("attacker.perturber.epsilon", "must be non-negative"));
        }
        if !(self.step >= 0.0) {
            return Err(Error::config("attacker.perturber.step", "must be non-negative"));
        }
        if !(self.nes_sigma > 0.0) {
            return Err(Error::config("attacker.perturber.nes_sigma", "must be positive"));
        }
        if self.method == PerturbMethod::Nes && self.nes_samples == 0 {
            return Err(Error::config("attacker.perturber.nes_samples", "must be positive"));
        }
        if !(self.hvp_step > 0.0) {
            return Err(Error::config("attacker.perturber.hvp_step", "must be positive"));
        }
        Ok(())
    }
}

/// Values of the individual loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub eff: f64,
    pub stat: f64,
    pub norm: f64,
    pub temporal: f64,
}

/// Loss of a candidate perturbation set for one round.
pub struct AttackObjective<'a> {
    model: &'a SurrogateModel,
    stats: &'a GradientStats,
    round: &'a ContextRound,
    target: usize,
    head: usize,
    clean_norm: f64,
    lambda: AttackParams,
    prev: &'a [Vec<f64>],
    grouping: NormGrouping,
    hvp_step: f64,
}

impl<'a> AttackObjective<'a> {
    pub fn new(
        model: &'a SurrogateModel,
        stats: &'a GradientStats,
        round: &'a ContextRound,
        target: usize,
        lambda: AttackParams,
        prev: &'a [Vec<f64>],
        grouping: NormGrouping,
    ) -> Self {
        let xt = &round.contexts[target];
        let head = max_q_arm(model, xt);
        let clean_norm = norm2(&model.reward_input_grad(xt, head));
        Self {
            model,
            stats,
            round,
            target,
            head,
            clean_norm,
            lambda,
            prev,
            grouping,
            hvp_step: 1e-4,
        }
    }

    pub fn with_hvp_step(mut self, h: f64) -> Self {
        self.hvp_step = h;
        self
    }

    pub fn target(&self) -> usize {
        self.target
    }

    fn weights(&self) -> (f64, f64, f64, f64) {
        let [l1, l2, l3] = self.lambda;
        match self.grouping {
            NormGrouping::Stealth => (l1, l2, l2, l3),
            NormGrouping::Effect => (l1, l2, l1, l3),
        }
    }

    fn shifted(&self, deltas: &[Vec<f64>], b: usize) -> Vec<f64> {
        self.round.contexts[b]
            .iter()
            .zip(&deltas[b])
            .map(|(x, d)| x + d)
            .collect()
    }

    pub fn terms(&self, deltas: &[Vec<f64>]) -> LossTerms {
        let k = self.round.k();
        let q: Vec<f64> = (0..k).map(|b| self.model.q_value(&self.shifted(deltas, b), b)).collect();
        let pi = softmax(&q, self.model.tau());
        let eff = -pi[self.target].max(1e-300).ln();
        let xt = self.shifted(deltas, self.target);
        let g = self.model.reward_input_grad(&xt, self.head);
        let stat = self.stats.mahalanobis_sq(&g);
        let norm = (norm2(&g) - self.clean_norm).powi(2);
        let temporal = deltas
            .iter()
            .zip(self.prev)
            .map(|(d, p)| d.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        LossTerms {
            eff,
            stat,
            norm,
            temporal,
        }
    }

    pub fn loss(&self, deltas: &[Vec<f64>]) -> f64 {
        let t = self.terms(deltas);
        let (we, ws, wn, wt) = self.weights();
        let mut v = 0.0;
        for (w, term) in [(we, t.eff), (ws, t.stat), (wn, t.norm), (wt, t.temporal)] {
            if w != 0.0 {
                v += w * term;
            }
        }
        v
    }

    /// Loss and its gradient with respect to every arm's perturbation.
    pub fn loss_and_grad(&self, deltas: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let k = self.round.k();
        let (we, ws, wn, wt) = self.weights();
        let mut grad: Vec<Vec<f64>> = deltas.iter().map(|d| vec![0.0; d.len()]).collect();

        let mut qs = Vec::with_capacity(k);
        let mut qgrads = Vec::with_capacity(k);
        for b in 0..k {
            let (q, gq) = self.model.q_input_grad(&self.shifted(deltas, b), b);
            qs.push(q);
            qgrads.push(gq);
        }
        let pi = softmax(&qs, self.model.tau());
        let eff = -pi[self.target].max(1e-300).ln();
        if we != 0.0 {
            for b in 0..k {
                let dq = we * (pi[b] - if b == self.target { 1.0 } else { 0.0 }) / self.model.tau();
                for (gi, qi) in grad[b].iter_mut().zip(&qgrads[b]) {
                    *gi += dq * qi;
                }
            }
        }

        let xt = self.shifted(deltas, self.target);
        let g = self.model.reward_input_grad(&xt, self.head);
        let stat = self.stats.mahalanobis_sq(&g);
        let gn = norm2(&g);
        let norm = (gn - self.clean_norm).powi(2);
        // direction whose Hessian product gives the gradient of R_s and R_n
        let mut v = vec![0.0; g.len()];
        if ws != 0.0 && self.stats.is_warm() {
            let u = self.stats.whitened_residual(&g);
            for (vi, ui) in v.iter_mut().zip(&u) {
                *vi += 2.0 * ws * ui;
            }
        }
        if wn != 0.0 && gn > 0.0 {
            let c = 2.0 * wn * (gn - self.clean_norm) / gn;
            for (vi, gi) in v.iter_mut().zip(&g) {
                *vi += c * gi;
            }
        }
        let hv = self.hvp(&xt, &v);
        for (gi, h) in grad[self.target].iter_mut().zip(&hv) {
            *gi += h;
        }

        let mut temporal = 0.0;
        for (b, (d, p)) in deltas.iter().zip(self.prev).enumerate() {
            for i in 0..d.len() {
                let diff = d[i] - p[i];
                temporal += diff * diff;
                if wt != 0.0 {
                    grad[b][i] += 2.0 * wt * diff;
                }
            }
        }

        let mut loss = 0.0;
        for (w, term) in [(we, eff), (ws, stat), (wn, norm), (wt, temporal)] {
            if w != 0.0 {
                loss += w * term;
            }
        }
        (loss, grad)
    }

    /// Hessian of the reward head times `v`, by central differences of the
    /// analytic input gradient along `v / |v|`.
    fn hvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let n = norm2(v);
        if n == 0.0 {
            return vec![0.0; v.len()];
        }
        let h = self.hvp_step;
        let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b / n).collect();
        let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b / n).collect();
        let gp = self.model.reward_input_grad(&xp, self.head);
        let gm = self.model.reward_input_grad(&xm, self.head);
        gp.iter().zip(&gm).map(|(a, b)| (a - b) * n / (2.0 * h)).collect()
    }
}

/// Scalar loss of `deltas` for one round.
pub fn attack_loss(
    model: &SurrogateModel,
    stats: &GradientStats,
    round: &ContextRound,
    target: usize,
    deltas: &[Vec<f64>],
    prev: &[Vec<f64>],
    lambda: AttackParams,
    grouping: NormGrouping,
) -> f64 {
    AttackObjective::new(model, stats, round, target, lambda, prev, grouping).loss(deltas)
}

/// Result of one perturbation search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbPlan {
    pub target: usize,
    pub deltas: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub lambda: AttackParams,
    pub initial_loss: f64,
    pub loss: f64,
    pub iterations: usize,
}

impl PerturbPlan {
    /// Largest absolute perturbation entry.
    pub fn linf(&self) -> f64 {
        self.deltas
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

fn zeros_like(round: &ContextRound) -> Vec<Vec<f64>> {
    vec![vec![0.0; round.d()]; round.k()]
}

fn active_arms(cfg: &PerturbConfig, k: usize, target: usize) -> Vec<usize> {
    if cfg.target_only {
        vec![target]
    } else {
        (0..k).collect()
    }
}

fn project(deltas: &mut [Vec<f64>], eps: f64) {
    for d in deltas.iter_mut() {
        for v in d.iter_mut() {
            *v = v.clamp(-eps, eps);
        }
    }
}

/// Projected gradient descent from `delta = 0`, keeping the best iterate.
pub fn pgd(obj: &AttackObjective, cfg: &PerturbConfig) -> PerturbPlan {
    let round = obj.round;
    let active = active_arms(cfg, round.k(), obj.target);
    let mut delta = zeros_like(round);
    let initial = obj.loss(&delta);
    let mut best = (initial, delta.clone());
    let mut prev_loss = initial;
    let mut rises = 0;
    let mut iters = 0;
    if cfg.epsilon > 0.0 {
        for _ in 0..cfg.iterations {
            let (_, grad) = obj.loss_and_grad(&delta);
            for &b in &active {
                for (d, g) in delta[b].iter_mut().zip(&grad[b]) {
                    *d -= cfg.step * g;
                }
            }
            project(&mut delta, cfg.epsilon);
            iters += 1;
            let l = obj.loss(&delta);
            if l < best.0 {
                best = (l, delta.clone());
            }
            if l > prev_loss {
                rises += 1;
                if rises >= cfg.patience.max(1) {
                    break;
                }
            } else {
                rises = 0;
            }
            prev_loss = l;
        }
    }
    PerturbPlan {
        target: obj.target,
        deltas: best.1,
        epsilon: cfg.epsilon,
        lambda: obj.lambda,
        initial_loss: initial,
        loss: best.0,
        iterations: iters,
    }
}

/// Vanilla Gaussian-smoothed gradient estimates, projected steps, best iterate.
pub fn nes(obj: &AttackObjective, cfg: &PerturbConfig, rng: &mut Rng) -> PerturbPlan {
    let round = obj.round;
    let active = active_arms(cfg, round.k(), obj.target);
    let mut delta = zeros_like(round);
    let initial = obj.loss(&delta);
    let mut best = (initial, delta.clone());
    let n = cfg.nes_samples.max(1);
    let s = cfg.nes_sigma;
    if cfg.epsilon > 0.0 {
        for _ in 0..cfg.nes_iterations {
            let mut grad = zeros_like(round);
            for _ in 0..n {
                let mut probe = delta.clone();
                let mut u = zeros_like(round);
                for &b in &active {
                    for i in 0..round.d() {
                        let z = rng.normal();
                        u[b][i] = z;
                        probe[b][i] += s * z;
                    }
                }
                let l = obj.loss(&probe);
                for &b in &active {
                    for i in 0..round.d() {
                        grad[b][i] += l * u[b][i] / (n as f64 * s);
                    }
                }
            }
            for &b in &active {
                for (d, g) in delta[b].iter_mut().zip(&grad[b]) {
                    *d -= cfg.nes_step * g;
                }
            }
            project(&mut delta, cfg.epsilon);
            let l = obj.loss(&delta);
            if l < best.0 {
                best = (l, delta.clone());
            }
        }
    }
    PerturbPlan {
        target: obj.target,
        deltas: best.1,
        epsilon: cfg.epsilon,
        lambda: obj.lambda,
        initial_loss: initial,
        loss: best.0,
        iterations: cfg.nes_iterations,
    }
}

/// Best of `random_samples` uniform box draws, with `delta = 0` always included.
pub fn random_search(obj: &AttackObjective, cfg: &PerturbConfig, rng: &mut Rng) -> PerturbPlan {
    let round = obj.round;
    let active = active_arms(cfg, round.k(), obj.target);
    let zero = zeros_like(round);
    let initial = obj.loss(&zero);
    let mut best = (initial, zero);
    for _ in 0..cfg.random_samples {
        let mut cand = zeros_like(round);
        for &b in &active {
            for v in cand[b].iter_mut() {
                *v = rng.uniform_in(-cfg.epsilon, cfg.epsilon);
            }
        }
        let l = obj.loss(&cand);
        if l < best.0 {
            best = (l, cand);
        }
    }
    PerturbPlan {
        target: obj.target,
        deltas: best.1,
        epsilon: cfg.epsilon,
        lambda: obj.lambda,
        initial_loss: initial,
        loss: best.0,
        iterations: cfg.random_samples,
    }
}

/// Run the configured search method.
pub fn perturb(obj: &AttackObjective, cfg: &PerturbConfig, rng: &mut Rng) -> PerturbPlan {
    match cfg.method {
        PerturbMethod::Pgd => pgd(obj, cfg),
        PerturbMethod::Nes => nes(obj, cfg, rng),
        PerturbMethod::Random => random_search(obj, cfg, rng),
    }
}
