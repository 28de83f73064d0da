use super::{first_argmax, GramFeature, OptimizerKind, Victim, VictimConfig, VictimKind};
use crate::environment::ContextRound;
use crate::error::{Error, Result};
use crate::numerics::linalg::{quad_form, rank_one_update, sherman_morrison};
use crate::numerics::{Activation, Adam, AdamConfig, Cholesky, Mlp, Optimizer, Rng};

/// Running EMA of the network's input gradient with a Mahalanobis trust score.
#[derive(Debug, Clone)]
pub struct TrustMonitor {
    d: usize,
    decay: f64,
    threshold: f64,
    warmup: usize,
    mean: Vec<f64>,
    cov: Vec<f64>,
    inv: Vec<f64>,
    count: usize,
}

impl TrustMonitor {
    pub fn new(d: usize, decay: f64, threshold: f64, warmup: usize) -> Self {
        Self {
            d,
            decay,
            threshold,
            warmup,
            mean: vec![0.0; d],
            cov: vec![0.0; d * d],
            inv: vec![0.0; d * d],
            count: 0,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Squared Mahalanobis distance of `g` from the running distribution.
    pub fn mahalanobis_sq(&self, g: &[f64]) -> f64 {
        let c: Vec<f64> = g.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        quad_form(&self.inv, &c).max(0.0)
    }

    /// `1 / (1 + M^2)`; exactly 1 until the warmup count is reached.
    pub fn weight(&self, g: &[f64]) -> f64 {
        if self.count < self.warmup.max(2) {
            return 1.0;
        }
        1.0 / (1.0 + self.mahalanobis_sq(g))
    }

    pub fn observe(&mut self, g: &[f64]) {
        let d = self.d;
        if self.count == 0 {
            self.mean.copy_from_slice(g);
        } else {
            let a = self.decay;
            for i in 0..d {
                self.mean[i] = a * self.mean[i] + (1.0 - a) * g[i];
            }
            let c: Vec<f64> = g.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
            self.cov.iter_mut().for_each(|v| *v *= a);
            rank_one_update(&mut self.cov, 1.0 - a, &c);
        }
        self.count += 1;
        let tr: f64 = (0..d).map(|i| self.cov[i * d + i]).sum();
        let ridge = 1e-3 * tr / d as f64 + 1e-12;
        let mut reg = self.cov.clone();
        for i in 0..d {
            reg[i * d + i] += ridge;
        }
        if let Ok(ch) = Cholesky::factor(&reg, d) {
            self.inv = ch.inverse();
        }
    }
}

/// Neural learner family sharing one regression network: NeuralUCB, NeuralTS,
/// NeuralLinUCB and the trust-weighted R-NeuralUCB.
pub struct NeuralBandit {
    kind: VictimKind,
    net: Mlp,
    opt: Optimizer,
    gram_feature: GramFeature,
    explore: f64,
    width: usize,
    p: usize,
    z: Vec<f64>,
    z_inv: Vec<f64>,
    xs: Vec<Vec<f64>>,
    rs: Vec<f64>,
    ws: Vec<f64>,
    batch: usize,
    train_steps: usize,
    train_every: usize,
    updates: usize,
    trust: Option<TrustMonitor>,
    screening: bool,
    rng: Rng,
    grads: Vec<f64>,
}

impl NeuralBandit {
    pub fn new(cfg: &VictimConfig, d: usize, mut rng: Rng) -> Result<Self> {
        if cfg.algorithm == VictimKind::RobustBandit {
            return Err(Error::config("victim.algorithm", "robust-bandit is not a neural learner"));
        }
        let net = Mlp::with_hidden(d, &cfg.hidden, 1, Activation::Relu, Activation::Identity, &mut rng)?;
        let width = *cfg.hidden.last().unwrap();
        let gram_feature = if cfg.algorithm == VictimKind::NeuralLinUcb {
            GramFeature::LastLayer
        } else {
            cfg.gram_feature
        };
        let p = match (cfg.algorithm, gram_feature) {
            (VictimKind::NeuralLinUcb, _) => width,
            (_, GramFeature::LastLayer) => width + 1,
            (_, GramFeature::Full) => net.num_params(),
        };
        let mut z = vec![0.0; p * p];
        let mut z_inv = vec![0.0; p * p];
        for i in 0..p {
            z[i * p + i] = cfg.gram_reg;
            z_inv[i * p + i] = 1.0 / cfg.gram_reg;
        }
        let opt = match cfg.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd { lr: cfg.lr },
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(
                net.num_params(),
                AdamConfig {
                    lr: cfg.lr,
                    ..AdamConfig::default()
                },
            )),
        };
        let trust = (cfg.algorithm == VictimKind::RNeuralUcb)
            .then(|| TrustMonitor::new(d, cfg.ema_decay, cfg.trust_threshold, cfg.trust_warmup));
        let n = net.num_params();
        Ok(Self {
            kind: cfg.algorithm,
            net,
            opt,
            gram_feature,
            explore: cfg.explore,
            width,
            p,
            z,
            z_inv,
            xs: Vec::new(),
            rs: Vec::new(),
            ws: Vec::new(),
            batch: cfg.batch,
            train_steps: cfg.train_steps,
            train_every: cfg.train_every,
            updates: 0,
            trust,
            screening: cfg.trust_screening,
            rng,
            grads: vec![0.0; n],
        })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn gram(&self) -> &[f64] {
        &self.z
    }

    pub fn gram_inverse(&self) -> &[f64] {
        &self.z_inv
    }

    pub fn feature_dim(&self) -> usize {
        self.p
    }

    pub fn trust_monitor(&self) -> Option<&TrustMonitor> {
        self.trust.as_ref()
    }

    pub fn buffer_len(&self) -> usize {
        self.rs.len()
    }

    /// `sqrt(g^T Z^{-1} g)` for an explicit feature vector.
    pub fn width_for_feature(&self, g: &[f64]) -> f64 {
        quad_form(&self.z_inv, g).max(0.0).sqrt()
    }

    /// Rank-one Gram update with an explicit feature vector.
    pub fn add_feature(&mut self, g: &[f64]) {
        rank_one_update(&mut self.z, 1.0, g);
        sherman_morrison(&mut self.z_inv, g);
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.net.forward_unchecked(x)[0]
    }

    fn feature(&self, tr: &crate::numerics::Trace) -> Vec<f64> {
        match (self.kind, self.gram_feature) {
            (VictimKind::NeuralLinUcb, _) => tr.penultimate().to_vec(),
            (_, GramFeature::LastLayer) => {
                let s = 1.0 / (self.width as f64).sqrt();
                let mut g: Vec<f64> = tr.penultimate().iter().map(|h| h * s).collect();
                g.push(s);
                g
            }
            (_, GramFeature::Full) => {
                let mut g = vec![0.0; self.net.num_params()];
                self.net.backward_unchecked(tr, &[1.0], Some(&mut g));
                let s = 1.0 / (self.width as f64).sqrt();
                g.iter_mut().for_each(|v| *v *= s);
                g
            }
        }
    }

    fn input_grad(&self, tr: &crate::numerics::Trace) -> Vec<f64> {
        self.net.backward_unchecked(tr, &[1.0], None)
    }

    /// Per-arm `(mean, width)` on a round.
    pub fn scores(&self, round: &ContextRound) -> Vec<(f64, f64)> {
        round
            .contexts
            .iter()
            .map(|x| {
                let tr = self.net.trace_unchecked(x);
                let g = self.feature(&tr);
                (tr.output()[0], self.width_for_feature(&g))
            })
            .collect()
    }

    fn train(&mut self) {
        let n = self.rs.len();
        if n == 0 || self.train_steps == 0 {
            return;
        }
        let b = self.batch.min(n);
        for _ in 0..self.train_steps {
            self.grads.iter_mut().for_each(|g| *g = 0.0);
            let mut any = false;
            for _ in 0..b {
                let i = self.rng.below(n);
                let tr = self.net.trace_unchecked(&self.xs[i]);
                let err = self.ws[i] * (tr.output()[0] - self.rs[i]) / b as f64;
                if err != 0.0 {
                    any = true;
                    self.net.backward_unchecked(&tr, &[err], Some(&mut self.grads));
                }
            }
            if any {
                self.opt.step(self.net.params_mut(), &self.grads);
            }
        }
    }
}

impl Victim for NeuralBandit {
    fn kind(&self) -> VictimKind {
        self.kind
    }

    fn select(&mut self, round: &ContextRound) -> usize {
        let mut scores = Vec::with_capacity(round.k());
        for x in &round.contexts {
            let tr = self.net.trace_unchecked(x);
            let mean = tr.output()[0];
            let g = self.feature(&tr);
            let width = self.width_for_feature(&g);
            let mut s = match self.kind {
                VictimKind::NeuralTs => mean + self.explore * width * self.rng.normal(),
                _ => mean + self.explore * width,
            };
            if let (Some(tm), true) = (&self.trust, self.screening) {
                let w = tm.weight(&self.input_grad(&tr));
                if w < tm.threshold() {
                    s -= 1.0 - w / tm.threshold();
                }
            }
            scores.push(s);
        }
        first_argmax(&scores)
    }

    fn update(&mut self, round: &ContextRound, arm: usize, reward: f64) {
        let x = &round.contexts[arm];
        let tr = self.net.trace_unchecked(x);
        let g = self.feature(&tr);
        self.add_feature(&g);

        let mut weight = 1.0;
        if self.trust.is_some() {
            let gx = self.input_grad(&tr);
            let tm = self.trust.as_mut().unwrap();
            let w = tm.weight(&gx);
            if w < tm.threshold() {
                weight = w;
            }
            tm.observe(&gx);
        }
        self.xs.push(x.clone());
        self.rs.push(reward);
        self.ws.push(weight);
        self.updates += 1;
        if self.updates % self.train_every == 0 {
            self.train();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round(xs: Vec<Vec<f64>>) -> ContextRound {
        ContextRound::new(0, xs).unwrap()
    }

    #[test]
    fn cold_start_with_zero_net_picks_arm_zero() {
        let cfg = VictimConfig::default();
        let mut v = NeuralBandit::new(&cfg, 3, Rng::new(1)).unwrap();
        v.network_mut().params_mut().iter_mut().for_each(|p| *p = 0.0);
        let r = round(vec![vec![0.1, 0.2, 0.3], vec![-0.5, 0.0, 0.4], vec![0.9, -0.1, 0.0]]);
        assert_eq!(v.select(&r), 0);
    }

    #[test]
    fn thompson_with_zero_scale_is_greedy() {
        let cfg = VictimConfig {
            algorithm: VictimKind::NeuralTs,
            explore: 0.0,
            ..VictimConfig::default()
        };
        let mut v = NeuralBandit::new(&cfg, 4, Rng::new(2)).unwrap();
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let r = round((0..5).map(|_| rng.unit_ball(4)).collect());
            let means: Vec<f64> = r.contexts.iter().map(|x| v.predict(x)).collect();
            assert_eq!(v.select(&r), first_argmax(&means));
        }
    }

    #[test]
    fn unit_feature_update_touches_one_entry() {
        let cfg = VictimConfig::default();
        let mut v = NeuralBandit::new(&cfg, 2, Rng::new(1)).unwrap();
        let p = v.feature_dim();
        let before = v.gram().to_vec();
        let mut e = vec![0.0; p];
        e[0] = 1.0;
        v.add_feature(&e);
        for i in 0..p * p {
            let diff = v.gram()[i] - before[i];
            if i == 0 {
                assert_eq!(diff, 1.0);
            } else {
                assert_eq!(diff, 0.0);
            }
        }
    }

    #[test]
    fn exact_prediction_leaves_model_unchanged() {
        let cfg = VictimConfig {
            train_steps: 5,
            ..VictimConfig::default()
        };
        let mut v = NeuralBandit::new(&cfg, 3, Rng::new(5)).unwrap();
        let r = round(vec![vec![0.3, -0.2, 0.1], vec![0.0, 0.5, 0.5]]);
        let before = v.network().params().to_vec();
        let y = v.predict(&r.contexts[1]);
        v.update(&r, 1, y);
        assert_eq!(v.network().params(), &before[..]);
    }

    #[test]
    fn widths_shrink_on_fixed_feature() {
        let cfg = VictimConfig::default();
        let mut v = NeuralBandit::new(&cfg, 2, Rng::new(1)).unwrap();
        let p = v.feature_dim();
        let mut rng = Rng::new(8);
        let probe: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
        let mut prev = v.width_for_feature(&probe);
        for _ in 0..50 {
            let g: Vec<f64> = (0..p).map(|_| rng.normal() * 0.3).collect();
            v.add_feature(&g);
            let w = v.width_for_feature(&probe);
            assert!(w <= prev + 1e-12);
            prev = w;
        }
    }

    #[test]
    fn trust_weight_drops_for_outliers() {
        let mut tm = TrustMonitor::new(2, 0.95, 0.1, 5);
        let mut rng = Rng::new(4);
        for _ in 0..100 {
            tm.observe(&[1.0 + 0.01 * rng.normal(), -1.0 + 0.01 * rng.normal()]);
        }
        assert!(tm.weight(&[1.0, -1.0]) > 0.5);
        assert!(tm.weight(&[3.0, 2.0]) < 0.1);
    }
}
