use super::{Victim, VictimConfig, VictimKind};
use crate::environment::ContextRound;
use crate::error::Result;
use crate::numerics::linalg::{dot, mat_vec, sherman_morrison};
use crate::numerics::{Activation, Mlp, Rng};

/// Importance-weighted ridge regression on frozen random-network features,
/// played through an exponential-weights (FTRL) policy over cumulative
/// per-round reward estimates.
pub struct RobustBandit {
    backbone: Mlp,
    p: usize,
    a_inv: Vec<f64>,
    b: Vec<f64>,
    theta_sum: Vec<f64>,
    eta: f64,
    iw_clip: f64,
    last_policy: Vec<f64>,
    rng: Rng,
}

impl RobustBandit {
    pub fn new(cfg: &VictimConfig, d: usize, k: usize, horizon: usize, mut rng: Rng) -> Result<Self> {
        let mut sizes = vec![d];
        sizes.extend_from_slice(&cfg.hidden);
        let acts = vec![Activation::Relu; cfg.hidden.len()];
        let backbone = Mlp::new(&sizes, &acts, &mut rng)?;
        let p = *cfg.hidden.last().unwrap();
        let mut a_inv = vec![0.0; p * p];
        for i in 0..p {
            a_inv[i * p + i] = 1.0 / cfg.ridge;
        }
        let eta = cfg
            .ftrl_eta
            .unwrap_or_else(|| ((k as f64).ln() / horizon.max(1) as f64).sqrt());
        Ok(Self {
            backbone,
            p,
            a_inv,
            b: vec![0.0; p],
            theta_sum: vec![0.0; p],
            eta,
            iw_clip: cfg.iw_clip,
            last_policy: Vec::new(),
            rng,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        self.backbone.forward_unchecked(x)
    }

    /// Exponential-weights distribution over the arms of `round`.
    pub fn policy(&self, round: &ContextRound) -> Vec<f64> {
        let s: Vec<f64> = round
            .contexts
            .iter()
            .map(|x| self.eta * dot(&self.theta_sum, &self.features(x)))
            .collect();
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect()
    }
}

impl Victim for RobustBandit {
    fn kind(&self) -> VictimKind {
        VictimKind::RobustBandit
    }

    fn select(&mut self, round: &ContextRound) -> usize {
        self.last_policy = self.policy(round);
        self.rng.categorical(&self.last_policy)
    }

    fn update(&mut self, round: &ContextRound, arm: usize, reward: f64) {
        let pi = self
            .last_policy
            .get(arm)
            .copied()
            .filter(|p| *p > 0.0)
            .unwrap_or(1.0 / round.k() as f64);
        let w = (1.0 / pi).min(self.iw_clip);
        let phi = self.features(&round.contexts[arm]);
        let scaled: Vec<f64> = phi.iter().map(|v| v * w.sqrt()).collect();
        sherman_morrison(&mut self.a_inv, &scaled);
        for (bi, fi) in self.b.iter_mut().zip(&phi) {
            *bi += w * reward * fi;
        }
        let theta = mat_vec(&self.a_inv, self.p, self.p, &self.b);
        for (s, t) in self.theta_sum.iter_mut().zip(&theta) {
            *s += t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_is_a_distribution() {
        let cfg = VictimConfig {
            algorithm: VictimKind::RobustBandit,
            ..VictimConfig::default()
        };
        let mut v = RobustBandit::new(&cfg, 3, 4, 500, Rng::new(1)).unwrap();
        let mut rng = Rng::new(2);
        for t in 0..200 {
            let r = ContextRound::new(t, (0..4).map(|_| rng.unit_ball(3)).collect()).unwrap();
            let p = v.policy(&r);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let a = v.select(&r);
            v.update(&r, a, rng.uniform());
        }
    }

    #[test]
    fn default_rate_is_sqrt_log_k_over_t() {
        let cfg = VictimConfig {
            algorithm: VictimKind::RobustBandit,
            ..VictimConfig::default()
        };
        let v = RobustBandit::new(&cfg, 3, 5, 2000, Rng::new(1)).unwrap();
        assert!((v.eta() - (5f64.ln() / 2000.0).sqrt()).abs() < 1e-15);
    }
}
