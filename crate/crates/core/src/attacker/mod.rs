//! The attack loop: observe, fit the surrogate, gate, choose `lambda`, perturb.
//!
//! An attacker only ever sees the clean contexts of a round and the arm the
//! victim chose on the contexts it was shown. [`Attacker::propose`] returns
//! the round to show; [`Attacker::observe`] receives the chosen arm.

mod baseline;

pub use baseline::BaselineAttacker;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::environment::ContextRound;
use crate::error::{Error, Result};
use crate::features::{self, build_state, estimate_round, GradientStats, STATE_DIM};
use crate::gp::{join, AttackParams, GpConfig, GpState};
use crate::numerics::Rng;
use crate::perturber::{perturb, AttackObjective, PerturbConfig, PerturbMethod};
use crate::selector::{objectives, scalarize_variant, AttackHistory, BudgetState, SelectorConfig};
use crate::surrogate::{retrain_due, ObservationWindow, SurrogateConfig, SurrogateModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Surrogate, query gate, GP-UCB over `lambda` and the configured perturber.
    AdvBandit,
    /// Same pipeline with `lambda` drawn uniformly each attack.
    RandomLambda,
    /// Same pipeline with NES in place of the configured perturber.
    NesAttacker,
    /// `+epsilon` on the target context, `-epsilon` elsewhere, random timing.
    FixedEpsilon,
    /// Uniform box perturbations, random timing.
    RandomDelta,
    None,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::AdvBandit => "adv-bandit",
            Strategy::RandomLambda => "random-lambda",
            Strategy::NesAttacker => "nes-attacker",
            Strategy::FixedEpsilon => "fixed-epsilon",
            Strategy::RandomDelta => "random-delta",
            Strategy::None => "none",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Strategy::FixedEpsilon | Strategy::RandomDelta | Strategy::None)
    }
}

/// How the target arm of a round is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPolicy {
    /// Lowest surrogate reward.
    LowestReward,
    /// Uniformly random arm.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackerConfig {
    pub strategy: Strategy,
    pub target: TargetPolicy,
    /// Total attack budget; defaults to `floor(0.04 T)`.
    pub budget: Option<usize>,
    pub surrogate: SurrogateConfig,
    pub selector: SelectorConfig,
    pub gp: GpConfig,
    pub perturber: PerturbConfig,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::AdvBandit,
            target: TargetPolicy::LowestReward,
            budget: None,
            surrogate: SurrogateConfig::default(),
            selector: SelectorConfig::default(),
            gp: GpConfig::default(),
            perturber: PerturbConfig::default(),
        }
    }
}

impl AttackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.surrogate.validate()?;
        self.selector.validate()?;
        self.gp.validate()?;
        self.perturber.validate()
    }

    pub fn budget_for(&self, horizon: usize) -> usize {
        self.budget.unwrap_or_else(|| default_budget(horizon))
    }
}

/// `floor(0.04 T)`
pub fn default_budget(horizon: usize) -> usize {
    horizon * 4 / 100
}

/// `1{success} (0.5 + 0.5 gap)`, with the normalized gap clamped to `[0, 1]`.
pub fn attack_reward(gap_norm: f64, success: bool) -> f64 {
    if success {
        (0.5 + 0.5 * gap_norm.clamp(0.0, 1.0)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// The round an attacker shows plus what it decided.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub shown: ContextRound,
    pub attacked: bool,
    /// Scalarized query score, when the gate ran.
    pub score: Option<f64>,
    pub threshold: Option<f64>,
    pub target: Option<usize>,
    pub lambda: Option<AttackParams>,
    /// Largest absolute perturbation entry actually applied.
    pub linf: f64,
    /// Surrogate-estimated reward gap between best and target arm.
    pub est_gap: Option<f64>,
}

impl Proposal {
    pub fn clean(round: &ContextRound) -> Self {
        Self {
            shown: round.clone(),
            attacked: false,
            score: None,
            threshold: None,
            target: None,
            lambda: None,
            linf: 0.0,
            est_gap: None,
        }
    }
}

/// Feedback bookkeeping after the victim acted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Outcome {
    /// Attack reward; `None` on clean rounds.
    pub reward: Option<f64>,
    pub success: Option<bool>,
    /// A scheduled retrain ran; the initial fit closing the warmup is not counted.
    pub retrained: bool,
}

pub trait Attacker: Send {
    fn strategy(&self) -> Strategy;
    /// Round `t` is 0-indexed.
    fn propose(&mut self, t: usize, round: &ContextRound) -> Proposal;
    fn observe(&mut self, t: usize, proposal: &Proposal, arm: usize) -> Outcome;
    fn budget_total(&self) -> usize;
    fn budget_used(&self) -> usize;
}

pub fn build(cfg: &AttackerConfig, d: usize, k: usize, horizon: usize, rng: Rng) -> Result<Box<dyn Attacker>> {
    cfg.validate()?;
    if cfg.strategy.is_baseline() {
        Ok(Box::new(BaselineAttacker::new(cfg, horizon, rng)))
    } else {
        Ok(Box::new(AdvBandit::new(cfg, d, k, horizon, rng)?))
    }
}

struct Pending {
    target: usize,
    lambda: AttackParams,
    state: [f64; STATE_DIM],
    features: features::FeatureVector,
    gap_norm: f64,
    deltas: Vec<Vec<f64>>,
}

/// Full adaptive attacker.
pub struct AdvBandit {
    strategy: Strategy,
    target_policy: TargetPolicy,
    horizon: usize,
    k: usize,
    surrogate: SurrogateModel,
    window: ObservationWindow,
    warmup: usize,
    interval: usize,
    stats: GradientStats,
    selector: SelectorConfig,
    history: AttackHistory,
    budget: BudgetState,
    gp: GpState,
    perturber: PerturbConfig,
    prev: Vec<Vec<f64>>,
    gap_max: f64,
    rng: Rng,
    pending: Option<Pending>,
    observed: usize,
}

impl AdvBandit {
    pub fn new(cfg: &AttackerConfig, d: usize, k: usize, horizon: usize, rng: Rng) -> Result<Self> {
        if cfg.strategy.is_baseline() {
            return Err(Error::config("attacker.strategy", "not a surrogate-driven strategy"));
        }
        cfg.validate()?;
        let mut perturber = cfg.perturber.clone();
        if cfg.strategy == Strategy::NesAttacker {
            perturber.method = PerturbMethod::Nes;
        }
        let warmup = cfg.surrogate.window_size(horizon);
        let surrogate = SurrogateModel::new(&cfg.surrogate, d, k, rng.fork(0))?;
        Ok(Self {
            strategy: cfg.strategy,
            target_policy: cfg.target,
            horizon,
            k,
            surrogate,
            window: ObservationWindow::new(warmup),
            warmup,
            interval: cfg.surrogate.interval(horizon),
            stats: GradientStats::cold(d),
            selector: cfg.selector.clone(),
            history: AttackHistory::new(cfg.selector.lengthscale, cfg.selector.prior),
            budget: BudgetState::new(cfg.budget_for(horizon), horizon, cfg.selector.pareto_window),
            gp: GpState::new(cfg.gp.clone())?,
            perturber,
            prev: vec![vec![0.0; d]; k],
            gap_max: 0.0,
            rng: rng.fork(1),
            pending: None,
            observed: 0,
        })
    }

    pub fn surrogate(&self) -> &SurrogateModel {
        &self.surrogate
    }

    pub fn gradient_stats(&self) -> &GradientStats {
        &self.stats
    }

    pub fn gp(&self) -> &GpState {
        &self.gp
    }

    pub fn history(&self) -> &AttackHistory {
        &self.history
    }

    pub fn budget(&self) -> &BudgetState {
        &self.budget
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    fn choose_lambda(&mut self, state: &[f64]) -> AttackParams {
        match self.strategy {
            Strategy::RandomLambda => [self.rng.uniform(), self.rng.uniform(), self.rng.uniform()],
            _ => self.gp.select_lambda(state, &mut self.rng),
        }
    }
}

impl Attacker for AdvBandit {
    fn strategy(&self) -> Strategy {
        self.strategy
    }

    fn propose(&mut self, t: usize, round: &ContextRound) -> Proposal {
        self.pending = None;
        if self.observed < self.warmup || round.k() != self.k {
            return Proposal::clean(round);
        }
        let feats = features::extract(&self.surrogate, &self.stats, round, t, self.horizon);
        let est = estimate_round(&self.surrogate, round);
        for f in &feats {
            self.gap_max = self.gap_max.max(f.gap());
        }
        self.gap_max = self.gap_max.max(est.gap);
        let target = match self.target_policy {
            TargetPolicy::LowestReward => est.target,
            TargetPolicy::Random => self.rng.below(self.k),
        };
        let gap_norm = if self.gap_max > 0.0 { est.gap / self.gap_max } else { 0.0 };

        let f = objectives(&feats[target], &self.history, self.gap_max);
        let v = scalarize_variant(
            self.selector.variant,
            &f,
            self.budget.remaining(),
            t,
            self.horizon,
            self.selector.gamma,
            self.selector.eta_w,
        );
        let pareto = self.selector.pareto.then_some(&f);
        let decision = self.budget.should_attack(v, t, pareto);
        let mut out = Proposal {
            shown: round.clone(),
            attacked: false,
            score: Some(v),
            threshold: Some(decision.threshold),
            target: Some(target),
            lambda: None,
            linf: 0.0,
            est_gap: Some(est.gap),
        };
        if !decision.attack || target == est.best && self.target_policy == TargetPolicy::LowestReward {
            return out;
        }

        let state = build_state(&feats[target], &feats[est.best], est.gap, self.history.success_rate())
            .normalized(self.k, self.gap_max);
        let lambda = self.choose_lambda(&state);
        let obj = AttackObjective::new(
            &self.surrogate,
            &self.stats,
            round,
            target,
            lambda,
            &self.prev,
            self.perturber.grouping,
        )
        .with_hvp_step(self.perturber.hvp_step);
        let plan = perturb(&obj, &self.perturber, &mut self.rng);
        let linf = plan.linf();
        if !(linf > 0.0) || !plan.deltas.iter().flatten().all(|v| v.is_finite()) {
            warn!("round {t}: perturbation search returned no usable step, submitting clean round");
            return out;
        }
        self.budget.consume();
        out.shown = round.perturbed(&plan.deltas);
        out.attacked = true;
        out.lambda = Some(lambda);
        out.linf = linf;
        self.pending = Some(Pending {
            target,
            lambda,
            state,
            features: feats[target],
            gap_norm,
            deltas: plan.deltas,
        });
        out
    }

    fn observe(&mut self, _t: usize, proposal: &Proposal, arm: usize) -> Outcome {
        let mut outcome = Outcome::default();
        if let Some(p) = self.pending.take() {
            let success = arm == p.target;
            let rho = attack_reward(p.gap_norm, success);
            if let Err(e) = self.gp.observe(join(&p.state, &p.lambda), rho) {
                warn!("gp observation dropped: {e}");
            }
            self.history.push(&p.features, success);
            self.prev = p.deltas;
            outcome.reward = Some(rho);
            outcome.success = Some(success);
        }
        self.window.push(proposal.shown.clone(), arm);
        self.observed += 1;
        let n = self.observed;
        let scheduled = retrain_due(n, self.warmup, self.interval);
        if n == self.warmup || scheduled {
            self.surrogate.fit(&self.window);
            self.stats = features::update_stats(&self.surrogate, &self.window);
            outcome.retrained = scheduled;
        }
        outcome
    }

    fn budget_total(&self) -> usize {
        self.budget.total()
    }

    fn budget_used(&self) -> usize {
        self.budget.used()
    }
}
