use super::{Attacker, AttackerConfig, Outcome, Proposal, Strategy};
use crate::environment::ContextRound;
use crate::numerics::Rng;

/// Non-adaptive attackers. Each round is attacked with probability
/// `b / (T - t)`, which spreads the remaining budget evenly over the rest of
/// the horizon; the target arm is uniform.
pub struct BaselineAttacker {
    strategy: Strategy,
    epsilon: f64,
    horizon: usize,
    total: usize,
    remaining: usize,
    rng: Rng,
    pending: Option<usize>,
}

impl BaselineAttacker {
    pub fn new(cfg: &AttackerConfig, horizon: usize, rng: Rng) -> Self {
        let total = if cfg.strategy == Strategy::None { 0 } else { cfg.budget_for(horizon) };
        Self {
            strategy: cfg.strategy,
            epsilon: cfg.perturber.epsilon,
            horizon,
            total,
            remaining: total,
            rng: rng.fork(2),
            pending: None,
        }
    }

    /// Perturbations for one attacked round.
    pub fn deltas(&mut self, round: &ContextRound, target: usize) -> Vec<Vec<f64>> {
        let eps = self.epsilon;
        (0..round.k())
            .map(|b| match self.strategy {
                Strategy::FixedEpsilon => vec![if b == target { eps } else { -eps }; round.d()],
                Strategy::RandomDelta => (0..round.d()).map(|_| self.rng.uniform_in(-eps, eps)).collect(),
                _ => vec![0.0; round.d()],
            })
            .collect()
    }
}

impl Attacker for BaselineAttacker {
    fn strategy(&self) -> Strategy {
        self.strategy
    }

    fn propose(&mut self, t: usize, round: &ContextRound) -> Proposal {
        self.pending = None;
        if self.remaining == 0 || t >= self.horizon || self.epsilon == 0.0 {
            return Proposal::clean(round);
        }
        let p = self.remaining as f64 / (self.horizon - t) as f64;
        if self.rng.uniform() >= p {
            return Proposal::clean(round);
        }
        let target = self.rng.below(round.k());
        let deltas = self.deltas(round, target);
        let linf = deltas.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        if linf == 0.0 {
            return Proposal::clean(round);
        }
        self.remaining -= 1;
        self.pending = Some(target);
        Proposal {
            shown: round.perturbed(&deltas),
            attacked: true,
            score: None,
            threshold: None,
            target: Some(target),
            lambda: None,
            linf,
            est_gap: None,
        }
    }

    fn observe(&mut self, _t: usize, _proposal: &Proposal, arm: usize) -> Outcome {
        match self.pending.take() {
            Some(target) => Outcome {
                reward: Some(if arm == target { 1.0 } else { 0.0 }),
                success: Some(arm == target),
                retrained: false,
            },
            None => Outcome::default(),
        }
    }

    fn budget_total(&self) -> usize {
        self.total
    }

    fn budget_used(&self) -> usize {
        self.total - self.remaining
    }
}
