//! Gaussian-process UCB over the joint input `(state, lambda)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::linalg::dot;
use crate::numerics::{Cholesky, Rng};

/// The continuous attack arm `lambda` in `[0, 1]^3`.
pub type AttackParams = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaSchedule {
    Constant,
    /// `beta * sqrt(ln(e + n))` with `n` observations.
    SqrtLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    pub signal_var: f64,
    pub noise_var: f64,
    pub lengthscale: f64,
    pub beta: f64,
    pub beta_schedule: BetaSchedule,
    pub n_rand: usize,
    pub n_refine: usize,
    pub n_ascent: usize,
    pub n_min: usize,
    pub fd_step: f64,
    pub ascent_lr: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            signal_var: 1.0,
            noise_var: 0.01,
            lengthscale: 0.5,
            beta: 2.0,
            beta_schedule: BetaSchedule::Constant,
            n_rand: 100,
            n_refine: 20,
            n_ascent: 5,
            n_min: 5,
            fd_step: 1e-3,
            ascent_lr: 0.05,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("signal_var", self.signal_var),
            ("noise_var", self.noise_var),
            ("lengthscale", self.lengthscale),
            ("fd_step", self.fd_step),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(format!("attacker.gp.{name}"), "must be positive"));
            }
        }
        if !(self.beta >= 0.0) {
            return Err(Error::config("attacker.gp.beta", "must be non-negative"));
        }
        if !(self.ascent_lr >= 0.0) {
            return Err(Error::config("attacker.gp.ascent_lr", "must be non-negative"));
        }
        if self.n_rand == 0 {
            return Err(Error::config("attacker.gp.n_rand", "must be positive"));
        }
        if self.n_refine > self.n_rand {
            return Err(Error::config("attacker.gp.n_refine", "cannot exceed n_rand"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GpState {
    cfg: GpConfig,
    zs: Vec<Vec<f64>>,
    rs: Vec<f64>,
    chol: Option<Cholesky>,
    alpha: Vec<f64>,
}

impl GpState {
    pub fn new(cfg: GpConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            zs: Vec::new(),
            rs: Vec::new(),
            chol: None,
            alpha: Vec::new(),
        })
    }

    pub fn config(&self) -> &GpConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.zs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zs.is_empty()
    }

    /// Dimension of the cached factor.
    pub fn factor_dim(&self) -> usize {
        self.chol.as_ref().map_or(0, |c| c.dim())
    }

    /// `sigma_f^2 exp(-|z - z'|^2 / (2 l^2))`
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        se_kernel(a, b, self.cfg.signal_var, self.cfg.lengthscale)
    }

    /// Append an observation and refactorize `K + sigma_n^2 I`.
    pub fn observe(&mut self, z: Vec<f64>, r: f64) -> Result<()> {
        if let Some(first) = self.zs.first() {
            if first.len() != z.len() {
                return Err(Error::Dimension {
                    context: "gp input",
                    expected: first.len(),
                    got: z.len(),
                });
            }
        }
        self.zs.push(z);
        self.rs.push(r);
        let n = self.zs.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.kernel(&self.zs[i], &self.zs[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
            k[i * n + i] += self.cfg.noise_var;
        }
        match Cholesky::factor(&k, n) {
            Ok(ch) => {
                self.alpha = ch.solve(&self.rs);
                self.chol = Some(ch);
                Ok(())
            }
            Err(e) => {
                self.zs.pop();
                self.rs.pop();
                Err(e)
            }
        }
    }

    /// Posterior mean and variance (variance clamped at 0).
    pub fn posterior(&self, z: &[f64]) -> (f64, f64) {
        let (mu, var) = self.posterior_raw(z);
        (mu, var.max(0.0))
    }

    /// Posterior with the variance before clamping.
    pub fn posterior_raw(&self, z: &[f64]) -> (f64, f64) {
        let Some(ch) = &self.chol else {
            return (0.0, self.cfg.signal_var);
        };
        let ks: Vec<f64> = self.zs.iter().map(|zi| self.kernel(zi, z)).collect();
        let mu = dot(&ks, &self.alpha);
        let v = ch.forward(&ks);
        (mu, self.cfg.signal_var - dot(&v, &v))
    }

    pub fn beta(&self) -> f64 {
        match self.cfg.beta_schedule {
            BetaSchedule::Constant => self.cfg.beta,
            BetaSchedule::SqrtLog => self.cfg.beta * (std::f64::consts::E + self.len() as f64).ln().sqrt(),
        }
    }

    /// `mu + beta sigma` at `(state, lambda)`.
    pub fn ucb(&self, state: &[f64], lambda: &AttackParams) -> f64 {
        let z = join(state, lambda);
        let (mu, var) = self.posterior(&z);
        mu + self.beta() * var.sqrt()
    }

    /// Uniform random `lambda` below `n_min` observations; otherwise random
    /// candidates ranked by UCB, the best refined by projected finite-difference
    /// ascent, keeping the best point seen.
    pub fn select_lambda(&self, state: &[f64], rng: &mut Rng) -> AttackParams {
        let c = &self.cfg;
        if self.len() < c.n_min {
            return [rng.uniform(), rng.uniform(), rng.uniform()];
        }
        let mut cands: Vec<(f64, AttackParams)> = (0..c.n_rand)
            .map(|_| {
                let l = [rng.uniform(), rng.uniform(), rng.uniform()];
                (self.ucb(state, &l), l)
            })
            .collect();
        cands.sort_by(|a, b| b.0.total_cmp(&a.0));
        let (mut best_v, mut best) = cands[0];
        for &(v0, l0) in cands.iter().take(c.n_refine) {
            let (mut v, mut l) = (v0, l0);
            for _ in 0..c.n_ascent {
                let mut g = [0.0; 3];
                for (i, gi) in g.iter_mut().enumerate() {
                    let mut lp = l;
                    lp[i] += c.fd_step;
                    *gi = (self.ucb(state, &lp) - v) / c.fd_step;
                }
                for i in 0..3 {
                    l[i] = (l[i] + c.ascent_lr * g[i]).clamp(0.0, 1.0);
                }
                v = self.ucb(state, &l);
                if v > best_v {
                    best_v = v;
                    best = l;
                }
            }
        }
        best
    }
}

pub fn se_kernel(a: &[f64], b: &[f64], signal_var: f64, lengthscale: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    signal_var * (-d2 / (2.0 * lengthscale * lengthscale)).exp()
}

pub fn join(state: &[f64], lambda: &AttackParams) -> Vec<f64> {
    let mut z = Vec::with_capacity(state.len() + 3);
    z.extend_from_slice(state);
    z.extend_from_slice(lambda);
    z
}
