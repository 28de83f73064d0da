//! Contextual-bandit environment: per-round context sets and noisy rewards
//! from a hidden reward function.
//!
//! Two sources are supported. The synthetic source draws every arm context
//! uniformly from the unit ball and scores it with one of three hidden reward
//! families. The dataset source replays a pre-featurized CSV file, building
//! each round from one positive row and `K - 1` negative rows.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::linalg::{dot, norm_inf};
use crate::numerics::mlp::sigmoid;
use crate::numerics::{Activation, Mlp, Rng};

/// The `K` per-arm context vectors shown at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRound {
    pub t: usize,
    pub contexts: Vec<Vec<f64>>,
}

impl ContextRound {
    pub fn new(t: usize, contexts: Vec<Vec<f64>>) -> Result<Self> {
        if contexts.len() < 2 {
            return Err(Error::Dimension {
                context: "context round arms (K >= 2)",
                expected: 2,
                got: contexts.len(),
            });
        }
        let d = contexts[0].len();
        for c in &contexts {
            if c.len() != d {
                return Err(Error::Dimension {
                    context: "context round feature dimension",
                    expected: d,
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dataset("non-finite context entry".into()));
            }
        }
        Ok(Self { t, contexts })
    }

    pub fn k(&self) -> usize {
        self.contexts.len()
    }

    pub fn d(&self) -> usize {
        self.contexts[0].len()
    }

    /// Copy with `deltas[i]` added to arm `i`.
    pub fn perturbed(&self, deltas: &[Vec<f64>]) -> ContextRound {
        let contexts = self
            .contexts
            .iter()
            .zip(deltas)
            .map(|(x, d)| x.iter().zip(d).map(|(a, b)| a + b).collect())
            .collect();
        ContextRound {
            t: self.t,
            contexts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardFamily {
    Linear,
    Cosine,
    MlpTeacher,
}

/// Synthetic hidden reward `h: R^d -> [0, 1]`.
#[derive(Debug, Clone)]
pub enum HiddenReward {
    /// `clamp(bias + w.x, 0, 1)`
    Linear { w: Vec<f64>, bias: f64 },
    /// `0.5 + 0.5 cos(w.x)`
    Cosine { w: Vec<f64> },
    /// `sigmoid(net(x))`
    MlpTeacher { net: Mlp },
}

impl HiddenReward {
    /// Random instance whose declared Lipschitz constant is `lipschitz`.
    pub fn random(family: RewardFamily, d: usize, lipschitz: f64, bias: f64, rng: &mut Rng) -> Self {
        match family {
            RewardFamily::Linear => HiddenReward::Linear {
                w: l1_direction(d, lipschitz, rng),
                bias,
            },
            RewardFamily::Cosine => HiddenReward::Cosine {
                w: l1_direction(d, lipschitz, rng),
            },
            RewardFamily::MlpTeacher => {
                let mut net = Mlp::with_hidden(
                    d,
                    &[16],
                    1,
                    Activation::Relu,
                    Activation::Identity,
                    rng,
                )
                .expect("valid teacher shape");
                let current = teacher_bound(&net);
                let scale = if current > 0.0 { lipschitz / current } else { 0.0 };
                let last = net.num_layers() - 1;
                net.weights_mut(last).iter_mut().for_each(|w| *w *= scale);
                net.bias_mut(last).iter_mut().for_each(|b| *b *= scale);
                HiddenReward::MlpTeacher { net }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = match self {
            HiddenReward::Linear { w, bias } => bias + dot(w, x),
            HiddenReward::Cosine { w } => 0.5 + 0.5 * dot(w, x).cos(),
            HiddenReward::MlpTeacher { net } => sigmoid(net.forward_unchecked(x)[0]),
        };
        v.clamp(0.0, 1.0)
    }

    /// Upper bound on the l-infinity Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match self {
            HiddenReward::Linear { w, .. } | HiddenReward::Cosine { w } => {
                w.iter().map(|v| v.abs()).sum()
            }
            HiddenReward::MlpTeacher { net } => teacher_bound(net),
        }
    }
}

fn l1_direction(d: usize, l1: f64, rng: &mut Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let s: f64 = w.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
    w.iter_mut().for_each(|v| *v *= l1 / s);
    w
}

/// Product of layer infinity-norms times the sigmoid slope bound 1/4.
fn teacher_bound(net: &Mlp) -> f64 {
    let mut sizes = vec![net.input_dim()];
    let mut prod = 0.25;
    for l in 0..net.num_layers() {
        let w = net.weights(l);
        let fan_in = *sizes.last().unwrap();
        let fan_out = w.len() / fan_in;
        let row_max = (0..fan_out)
            .map(|o| w[o * fan_in..(o + 1) * fan_in].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        prod *= row_max;
        sizes.push(fan_out);
    }
    prod
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub family: RewardFamily,
    pub d: usize,
    pub k: usize,
    pub sigma: f64,
    /// Declared Lipschitz constant of the synthetic reward.
    pub lipschitz: f64,
    /// Intercept of the linear family.
    pub linear_bias: f64,
    /// Pre-featurized CSV; when set the synthetic family is ignored.
    pub dataset: Option<PathBuf>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            family: RewardFamily::Cosine,
            d: 10,
            k: 5,
            sigma: 0.05,
            lipschitz: 8.0,
            linear_bias: 0.5,
            dataset: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config("environment.k", "need at least 2 arms"));
        }
        if self.d == 0 {
            return Err(Error::config("environment.d", "must be positive"));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::config("environment.sigma", "must be non-negative"));
        }
        if !(self.lipschitz >= 0.0) {
            return Err(Error::config("environment.lipschitz", "must be non-negative"));
        }
        Ok(())
    }
}

/// Pre-featurized rows split by label.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub d: usize,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

impl Dataset {
    /// Parse a CSV with header `feature_0..feature_{d-1},label`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let n = headers.len();
        if n < 2 || &headers[n - 1] != "label" {
            return Err(Error::Dataset(format!(
                "{}: last column must be `label`",
                path.display()
            )));
        }
        for (i, h) in headers.iter().take(n - 1).enumerate() {
            if h != format!("feature_{i}") {
                return Err(Error::Dataset(format!(
                    "{}: column {i} is `{h}`, expected `feature_{i}`",
                    path.display()
                )));
            }
        }
        let d = n - 1;
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::Dataset(format!("{}: row {}: bad number `{s}`", path.display(), row + 1))
                })
            };
            let x = rec
                .iter()
                .take(d)
                .map(parse)
                .collect::<Result<Vec<f64>>>()?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!("{}: row {}: non-finite", path.display(), row + 1)));
            }
            match parse(&rec[d])? {
                l if l == 1.0 => positives.push(x),
                l if l == 0.0 => negatives.push(x),
                l => {
                    return Err(Error::Dataset(format!(
                        "{}: row {}: label {l} is not binary",
                        path.display(),
                        row + 1
                    )))
                }
            }
        }
        Ok(Self {
            d,
            positives,
            negatives,
        })
    }
}

struct Pool {
    rows: Vec<Vec<f64>>,
    order: Vec<usize>,
    cursor: usize,
    label: &'static str,
}

impl Pool {
    fn new(rows: Vec<Vec<f64>>, label: &'static str, rng: &mut Rng) -> Self {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        rng.shuffle(&mut order);
        Self {
            rows,
            order,
            cursor: 0,
            label,
        }
    }

    fn draw(&mut self, rng: &mut Rng) -> Vec<f64> {
        if self.cursor == self.order.len() {
            rng.shuffle(&mut self.order);
            self.cursor = 0;
            info!("dataset {} pool exhausted, reshuffling", self.label);
        }
        let i = self.order[self.cursor];
        self.cursor += 1;
        self.rows[i].clone()
    }
}

enum Source {
    Synthetic(HiddenReward),
    Dataset { pos: Pool, neg: Pool },
}

/// Environment state for one run.
pub struct Environment {
    cfg: EnvConfig,
    horizon: usize,
    source: Source,
    context_rng: Rng,
    noise_rng: Rng,
    t: usize,
    /// True expected reward of each arm in the current round.
    values: Vec<f64>,
}

impl Environment {
    pub fn new(cfg: EnvConfig, horizon: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let root = Rng::new(seed);
        let mut build_rng = root.fork(0);
        let mut context_rng = root.fork(1);
        let noise_rng = root.fork(2);
        let source = match &cfg.dataset {
            None => Source::Synthetic(HiddenReward::random(
                cfg.family,
                cfg.d,
                cfg.lipschitz,
                cfg.linear_bias,
                &mut build_rng,
            )),
            Some(path) => {
                let ds = Dataset::load(path)?;
                if ds.d != cfg.d {
                    return Err(Error::config(
                        "environment.d",
                        format!("dataset has {} features, config says {}", ds.d, cfg.d),
                    ));
                }
                if ds.positives.is_empty() {
                    return Err(Error::Dataset("no rows with label 1".into()));
                }
                if ds.negatives.len() < cfg.k - 1 {
                    return Err(Error::Dataset(format!(
                        "need at least {} rows with label 0, found {}",
                        cfg.k - 1,
                        ds.negatives.len()
                    )));
                }
                Source::Dataset {
                    pos: Pool::new(ds.positives, "positive", &mut context_rng),
                    neg: Pool::new(ds.negatives, "negative", &mut context_rng),
                }
            }
        };
        Ok(Self {
            cfg,
            horizon,
            source,
            context_rng,
            noise_rng,
            t: 0,
            values: Vec::new(),
        })
    }

    /// Synthetic environment with an explicit reward function.
    pub fn with_reward(cfg: EnvConfig, horizon: usize, seed: u64, reward: HiddenReward) -> Result<Self> {
        let mut env = Self::new(EnvConfig { dataset: None, ..cfg }, horizon, seed)?;
        env.source = Source::Synthetic(reward);
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn round_index(&self) -> usize {
        self.t
    }

    pub fn hidden_reward(&self) -> Option<&HiddenReward> {
        match &self.source {
            Source::Synthetic(h) => Some(h),
            Source::Dataset { .. } => None,
        }
    }

    pub fn next_round(&mut self) -> ContextRound {
        assert!(self.t < self.horizon, "next_round past the horizon");
        let k = self.cfg.k;
        let (contexts, values) = match &mut self.source {
            Source::Synthetic(h) => {
                let xs: Vec<Vec<f64>> = (0..k).map(|_| self.context_rng.unit_ball(self.cfg.d)).collect();
                let vs = xs.iter().map(|x| h.eval(x)).collect();
                (xs, vs)
            }
            Source::Dataset { pos, neg } => {
                let mut rows = Vec::with_capacity(k);
                rows.push((pos.draw(&mut self.context_rng), 1.0));
                for _ in 1..k {
                    rows.push((neg.draw(&mut self.context_rng), 0.0));
                }
                self.context_rng.shuffle(&mut rows);
                rows.into_iter().unzip()
            }
        };
        let round = ContextRound { t: self.t, contexts };
        self.values = values;
        self.t += 1;
        round
    }

    fn check_round(&self, round: &ContextRound) {
        assert!(
            self.t > 0 && round.t == self.t - 1,
            "round {} is not the environment's current round",
            round.t
        );
    }

    /// Expected reward `h(x_{t,arm})` of the current round.
    pub fn true_reward(&self, round: &ContextRound, arm: usize) -> f64 {
        self.check_round(round);
        self.values[arm]
    }

    pub fn true_rewards(&self, round: &ContextRound) -> &[f64] {
        self.check_round(round);
        &self.values
    }

    /// Noisy reward `h(x_{t,arm}) + xi` with xi Gaussian truncated at 3 sigma.
    pub fn pull(&mut self, round: &ContextRound, arm: usize) -> f64 {
        assert!(arm < round.k(), "arm {arm} out of range");
        let h = self.true_reward(round, arm);
        h + self.noise()
    }

    fn noise(&mut self) -> f64 {
        let s = self.cfg.sigma;
        if s == 0.0 {
            return 0.0;
        }
        loop {
            let z = self.noise_rng.normal();
            if z.abs() <= 3.0 {
                return s * z;
            }
        }
    }

    pub fn optimal_arm(&self, round: &ContextRound) -> usize {
        argmax(self.true_rewards(round))
    }

    /// `h(x_{a*}) - h(x_{arm})` on the current round.
    pub fn regret(&self, round: &ContextRound, arm: usize) -> f64 {
        let v = self.true_rewards(round);
        v[argmax(v)] - v[arm]
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// First index of the minimum.
pub fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Empirical `max |h(x) - h(x')| / ||x - x'||_inf` over random pairs in the unit ball.
pub fn empirical_lipschitz(h: &HiddenReward, d: usize, pairs: usize, rng: &mut Rng) -> f64 {
    let mut best = 0.0_f64;
    for _ in 0..pairs {
        let x = rng.unit_ball(d);
        let y = rng.unit_ball(d);
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let n = norm_inf(&diff);
        if n > 0.0 {
            best = best.max((h.eval(&x) - h.eval(&y)).abs() / n);
        }
    }
    best
}
