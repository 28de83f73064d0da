//! Gradient statistics and the five per-context attack features.

use serde::{Deserialize, Serialize};

use crate::environment::{argmax, ContextRound};
use crate::numerics::linalg::{quad_form, trace};
use crate::numerics::Cholesky;
use crate::surrogate::{entropy, softmax, ObservationWindow, SurrogateModel};

/// Mean and sample covariance of surrogate input gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStats {
    d: usize,
    n: usize,
    mean: Vec<f64>,
    cov: Vec<f64>,
    /// Inverse of `cov + ridge I`.
    inv: Vec<f64>,
    ridge: f64,
}

impl GradientStats {
    pub fn cold(d: usize) -> Self {
        Self {
            d,
            n: 0,
            mean: vec![0.0; d],
            cov: vec![0.0; d * d],
            inv: vec![0.0; d * d],
            ridge: 0.0,
        }
    }

    /// Sample statistics with `N - 1` denominator and ridge `1e-6 trace / d`.
    /// Fewer than two gradients gives cold statistics.
    pub fn from_gradients(grads: &[Vec<f64>], d: usize) -> Self {
        let n = grads.len();
        if n < 2 {
            return Self::cold(d);
        }
        let mut mean = vec![0.0; d];
        for g in grads {
            for (m, v) in mean.iter_mut().zip(g) {
                *m += v / n as f64;
            }
        }
        let mut cov = vec![0.0; d * d];
        for g in grads {
            for i in 0..d {
                let ci = g[i] - mean[i];
                for j in 0..d {
                    cov[i * d + j] += ci * (g[j] - mean[j]);
                }
            }
        }
        cov.iter_mut().for_each(|v| *v /= (n - 1) as f64);
        let ridge = (1e-6 * trace(&cov, d) / d as f64).max(1e-12);
        let mut reg = cov.clone();
        for i in 0..d {
            reg[i * d + i] += ridge;
        }
        match Cholesky::factor(&reg, d) {
            Ok(ch) => Self {
                d,
                n,
                mean,
                cov,
                inv: ch.inverse(),
                ridge,
            },
            Err(_) => Self::cold(d),
        }
    }

    /// Statistics with an explicit mean and inverse covariance.
    pub fn with_inverse(mean: Vec<f64>, inv: Vec<f64>, n: usize) -> Self {
        let d = mean.len();
        assert_eq!(inv.len(), d * d, "inverse covariance shape");
        let cov = Cholesky::factor(&inv, d)
            .map(|c| c.inverse())
            .unwrap_or_else(|_| vec![0.0; d * d]);
        Self {
            d,
            n,
            mean,
            cov,
            inv,
            ridge: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn is_warm(&self) -> bool {
        self.n >= 2
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[f64] {
        &self.cov
    }

    pub fn inverse(&self) -> &[f64] {
        &self.inv
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `g^T Sigma^{-1} g` (uncentered); 0 when cold.
    pub fn norm_sq(&self, g: &[f64]) -> f64 {
        if !self.is_warm() {
            return 0.0;
        }
        quad_form(&self.inv, g).max(0.0)
    }

    /// `(g - mu)^T Sigma^{-1} (g - mu)`; 0 when cold.
    pub fn mahalanobis_sq(&self, g: &[f64]) -> f64 {
        if !self.is_warm() {
            return 0.0;
        }
        let c: Vec<f64> = g.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        quad_form(&self.inv, &c).max(0.0)
    }

    /// `Sigma^{-1} (g - mu)`; zero when cold.
    pub fn whitened_residual(&self, g: &[f64]) -> Vec<f64> {
        if !self.is_warm() {
            return vec![0.0; self.d];
        }
        let c: Vec<f64> = g.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        crate::numerics::linalg::mat_vec(&self.inv, self.d, self.d, &c)
    }
}

/// Arm whose Q-value is largest when every head scores the same context.
pub fn max_q_arm(m: &SurrogateModel, x: &[f64]) -> usize {
    let f = m.features(x);
    let q: Vec<f64> = (0..m.k()).map(|a| m.q_from_features(&f, a)).collect();
    argmax(&q)
}

/// `grad_x h(x, a)` taken on the max-Q head at `x`.
pub fn grad_of_reward(m: &SurrogateModel, x: &[f64]) -> Vec<f64> {
    m.reward_input_grad(x, max_q_arm(m, x))
}

/// Gradient statistics over the chosen-arm contexts of a window.
pub fn update_stats(m: &SurrogateModel, window: &ObservationWindow) -> GradientStats {
    let grads: Vec<Vec<f64>> = window
        .iter()
        .map(|(r, a)| grad_of_reward(m, &r.contexts[*a]))
        .collect();
    GradientStats::from_gradients(&grads, m.input_dim())
}

/// `psi_1 .. psi_5` of one context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; 5]);

impl FeatureVector {
    /// Policy entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.0[0]
    }
    /// Predicted trust weight in (0, 1].
    pub fn weight(&self) -> f64 {
        self.0[1]
    }
    pub fn mahalanobis(&self) -> f64 {
        self.0[2]
    }
    pub fn gap(&self) -> f64 {
        self.0[3]
    }
    pub fn time(&self) -> f64 {
        self.0[4]
    }
}

pub fn extract_context(m: &SurrogateModel, stats: &GradientStats, x: &[f64], t: usize, horizon: usize) -> FeatureVector {
    let k = m.k();
    let f = m.features(x);
    let q: Vec<f64> = (0..k).map(|a| m.q_from_features(&f, a)).collect();
    let pi = softmax(&q, m.tau());
    let h: Vec<f64> = (0..k).map(|a| m.reward_from_features(&f, a)).collect();
    let g = m.reward_input_grad(x, argmax(&q));
    let psi1 = entropy(&pi).clamp(0.0, (k as f64).ln());
    let psi2 = 1.0 / (1.0 + stats.norm_sq(&g));
    let psi3 = stats.mahalanobis_sq(&g).sqrt();
    let hmax = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let hmin = h.iter().cloned().fold(f64::INFINITY, f64::min);
    let psi5 = if horizon == 0 { 0.0 } else { (t as f64 / horizon as f64).clamp(0.0, 1.0) };
    FeatureVector([psi1, psi2, psi3, (hmax - hmin).max(0.0), psi5])
}

/// Features of every arm context in a round.
pub fn extract(m: &SurrogateModel, stats: &GradientStats, round: &ContextRound, t: usize, horizon: usize) -> Vec<FeatureVector> {
    round
        .contexts
        .iter()
        .map(|x| extract_context(m, stats, x, t, horizon))
        .collect()
}

/// Target arm, best arm and estimated gap of a round under the reward heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundEstimate {
    pub target: usize,
    pub best: usize,
    pub gap: f64,
}

pub fn estimate_round(m: &SurrogateModel, round: &ContextRound) -> RoundEstimate {
    let h = m.rewards(round);
    let best = argmax(&h);
    let target = crate::environment::argmin(&h);
    RoundEstimate {
        target,
        best,
        gap: (h[best] - h[target]).max(0.0),
    }
}

/// `[psi(x_target), psi(x_best), gap, success rate]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextualState(pub [f64; 12]);

pub const STATE_DIM: usize = 12;

pub fn build_state(target: &FeatureVector, best: &FeatureVector, gap: f64, success_rate: f64) -> ContextualState {
    let mut s = [0.0; STATE_DIM];
    s[..5].copy_from_slice(&target.0);
    s[5..10].copy_from_slice(&best.0);
    s[10] = gap;
    s[11] = success_rate.clamp(0.0, 1.0);
    ContextualState(s)
}

impl ContextualState {
    /// Map every component to `[0, 1]`: entropy by `ln K`, Mahalanobis by
    /// `m / (1 + m)`, gaps by the running gap maximum.
    pub fn normalized(&self, k: usize, gap_max: f64) -> [f64; STATE_DIM] {
        let ln_k = (k as f64).ln().max(f64::MIN_POSITIVE);
        let scale = if gap_max > 0.0 { 1.0 / gap_max } else { 0.0 };
        let mut out = self.0;
        for half in [0, 5] {
            out[half] = (out[half] / ln_k).clamp(0.0, 1.0);
            out[half + 2] = out[half + 2] / (1.0 + out[half + 2]);
            out[half + 3] = (out[half + 3] * scale).clamp(0.0, 1.0);
        }
        out[10] = (out[10] * scale).clamp(0.0, 1.0);
        out
    }
}
