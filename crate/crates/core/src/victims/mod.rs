//! Victim contextual-bandit learners.
//!
//! Every learner sees only the contexts handed to it, picks an arm, and then
//! consumes the reward of that arm. Ties in arm scores go to the lowest index.

mod neural;
mod robust;

use serde::{Deserialize, Serialize};

pub use neural::{NeuralBandit, TrustMonitor};
pub use robust::RobustBandit;

use crate::environment::ContextRound;
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VictimKind {
    NeuralUcb,
    NeuralTs,
    NeuralLinUcb,
    RNeuralUcb,
    RobustBandit,
}

impl VictimKind {
    pub fn name(self) -> &'static str {
        match self {
            VictimKind::NeuralUcb => "neural-ucb",
            VictimKind::NeuralTs => "neural-ts",
            VictimKind::NeuralLinUcb => "neural-lin-ucb",
            VictimKind::RNeuralUcb => "r-neural-ucb",
            VictimKind::RobustBandit => "robust-bandit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Which gradient feeds the Gram matrix of the UCB-family learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramFeature {
    LastLayer,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VictimConfig {
    pub algorithm: VictimKind,
    pub hidden: Vec<usize>,
    /// Exploration scale: nu for NeuralUCB/NeuralTS/R-NeuralUCB, alpha for NeuralLinUCB.
    pub explore: f64,
    /// Initial Gram diagonal.
    pub gram_reg: f64,
    pub gram_feature: GramFeature,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch: usize,
    pub train_steps: usize,
    /// Train after every `train_every` updates.
    pub train_every: usize,
    pub trust_threshold: f64,
    pub ema_decay: f64,
    /// Observations before the trust monitor starts scoring.
    pub trust_warmup: usize,
    /// Penalize low-trust arms when choosing, not only when training.
    pub trust_screening: bool,
    /// Ridge parameter of the importance-weighted regression.
    pub ridge: f64,
    /// Exponential-weights rate; defaults to `sqrt(ln K / T)`.
    pub ftrl_eta: Option<f64>,
    /// Cap on importance weights `1 / pi`.
    pub iw_clip: f64,
}

impl Default for VictimConfig {
    fn default() -> Self {
        Self {
            algorithm: VictimKind::NeuralUcb,
            hidden: vec![32, 32],
            explore: 1.0,
            gram_reg: 1.0,
            gram_feature: GramFeature::LastLayer,
            optimizer: OptimizerKind::Sgd,
            lr: 0.01,
            batch: 32,
            train_steps: 100,
            train_every: 1,
            trust_threshold: 0.1,
            ema_decay: 0.95,
            trust_warmup: 20,
            trust_screening: false,
            ridge: 0.1,
            ftrl_eta: None,
            iw_clip: 50.0,
        }
    }
}

impl VictimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("victim.hidden", "need at least one positive width"));
        }
        if !(self.explore >= 0.0) {
            return Err(Error::config("victim.explore", "must be non-negative"));
        }
        if !(self.gram_reg > 0.0) {
            return Err(Error::config("victim.gram_reg", "must be positive"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("victim.lr", "must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::config("victim.batch", "must be positive"));
        }
        if self.train_every == 0 {
            return Err(Error::config("victim.train_every", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.trust_threshold) {
            return Err(Error::config("victim.trust_threshold", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::config("victim.ema_decay", "must lie in [0, 1)"));
        }
        if !(self.ridge > 0.0) {
            return Err(Error::config("victim.ridge", "must be positive"));
        }
        if let Some(eta) = self.ftrl_eta {
            if !(eta > 0.0) {
                return Err(Error::config("victim.ftrl_eta", "must be positive"));
            }
        }
        if !(self.iw_clip >= 1.0) {
            return Err(Error::config("victim.iw_clip", "must be at least 1"));
        }
        Ok(())
    }
}

/// Common interface of all victim learners.
pub trait Victim: Send {
    fn kind(&self) -> VictimKind;

    /// Choose an arm for the contexts as shown.
    fn select(&mut self, round: &ContextRound) -> usize;

    /// Consume the reward of `arm` on the same shown contexts.
    fn update(&mut self, round: &ContextRound, arm: usize, reward: f64);
}

/// Build a victim for `d`-dimensional contexts with `k` arms over horizon `horizon`.
pub fn build(cfg: &VictimConfig, d: usize, k: usize, horizon: usize, rng: Rng) -> Result<Box<dyn Victim>> {
    cfg.validate()?;
    Ok(match cfg.algorithm {
        VictimKind::RobustBandit => Box::new(RobustBandit::new(cfg, d, k, horizon, rng)?),
        _ => Box::new(NeuralBandit::new(cfg, d, rng)?),
    })
}

/// Index of the largest score; ties go to the lowest index.
pub(crate) fn first_argmax(scores: &[f64]) -> usize {
    crate::environment::argmax(scores)
}
