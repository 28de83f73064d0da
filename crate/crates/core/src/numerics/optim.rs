use serde::{Deserialize, Serialize};

use super::linalg::norm2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global L2 gradient clip; `0` disables.
    pub clip_norm: f64,
    /// Cosine annealing period in steps; `0` keeps the rate constant.
    pub cosine_t_max: u64,
    pub lr_min: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: 0.0,
            cosine_t_max: 0,
            lr_min: 0.0,
        }
    }
}

/// Adam with bias correction, optional clipping, L2 weight decay and a cosine
/// learning-rate schedule whose phase can be restarted.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    phase: u64,
    scratch: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            phase: 0,
            scratch: vec![0.0; n],
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Start a new cosine period (moments and the bias-correction counter keep going).
    pub fn restart_schedule(&mut self) {
        self.phase = 0;
    }

    pub fn current_lr(&self) -> f64 {
        let c = &self.cfg;
        if c.cosine_t_max == 0 {
            return c.lr;
        }
        let frac = self.phase.min(c.cosine_t_max) as f64 / c.cosine_t_max as f64;
        c.lr_min + 0.5 * (c.lr - c.lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "adam parameter length");
        assert_eq!(grads.len(), self.m.len(), "adam gradient length");
        let c = self.cfg;
        let lr = self.current_lr();
        self.step += 1;
        self.phase += 1;

        let g = &mut self.scratch;
        g.copy_from_slice(grads);
        if c.clip_norm > 0.0 {
            let n = norm2(g);
            if n > c.clip_norm {
                let s = c.clip_norm / n;
                g.iter_mut().for_each(|x| *x *= s);
            }
        }
        if c.weight_decay != 0.0 {
            for (gi, p) in g.iter_mut().zip(params.iter()) {
                *gi += c.weight_decay * p;
            }
        }

        let t = self.step as f64;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        for i in 0..params.len() {
            let gi = g[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * gi;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * gi * gi;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + c.eps);
        }
    }
}

/// Gradient-step rule used by the victim learners.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= *lr * g;
                }
            }
            Optimizer::Adam(a) => a.step(params, grads),
        }
    }
}
