//! Budget-aware query selection.
//!
//! Each round is scored on three objectives in `[0, 1]`: estimated success
//! probability, normalized impact and predicted trust weight. Scores are
//! scalarized with budget-adaptive weights and compared against a quantile of
//! all past scores whose level tracks the remaining budget rate.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scalarization {
    /// `min_j w_j f_j`
    Chebyshev,
    /// Weighted geometric mean of the objectives.
    Product,
    /// Success times impact only.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectorConfig {
    pub gamma: f64,
    pub eta_w: f64,
    /// RBF lengthscale of the success-probability kernel.
    pub lengthscale: f64,
    pub pareto: bool,
    /// Number of recent objective vectors kept for the dominance test.
    pub pareto_window: usize,
    pub variant: Scalarization,
    /// Success estimate before any attack has been observed.
    pub prior: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            eta_w: 0.5,
            lengthscale: 1.0,
            pareto: true,
            pareto_window: 200,
            variant: Scalarization::Chebyshev,
            prior: 0.5,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::config("attacker.selector.gamma", "must be non-negative"));
        }
        if !(self.eta_w >= 0.0) {
            return Err(Error::config("attacker.selector.eta_w", "must be non-negative"));
        }
        if !(self.lengthscale > 0.0) {
            return Err(Error::config("attacker.selector.lengthscale", "must be positive"));
        }
        if self.pareto && self.pareto_window == 0 {
            return Err(Error::config("attacker.selector.pareto_window", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.prior) {
            return Err(Error::config("attacker.selector.prior", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Features of attacked contexts and whether each attack succeeded.
#[derive(Debug, Clone)]
pub struct AttackHistory {
    items: Vec<([f64; 5], bool)>,
    lengthscale: f64,
    prior: f64,
    successes: usize,
}

impl AttackHistory {
    pub fn new(lengthscale: f64, prior: f64) -> Self {
        Self {
            items: Vec::new(),
            lengthscale,
            prior,
            successes: 0,
        }
    }

    pub fn push(&mut self, features: &FeatureVector, success: bool) {
        self.items.push((features.0, success));
        self.successes += success as usize;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Fraction of successful attacks; 0 before the first attack.
    pub fn success_rate(&self) -> f64 {
        if self.items.is_empty() {
            0.0
        } else {
            self.successes as f64 / self.items.len() as f64
        }
    }

    /// Nadaraya-Watson estimate with an RBF kernel over feature vectors.
    pub fn success_prob(&self, features: &FeatureVector) -> f64 {
        let inv = 1.0 / (2.0 * self.lengthscale * self.lengthscale);
        let (mut num, mut den) = (0.0, 0.0);
        for (f, s) in &self.items {
            let d2: f64 = f.iter().zip(&features.0).map(|(a, b)| (a - b) * (a - b)).sum();
            let k = (-d2 * inv).exp();
            den += k;
            if *s {
                num += k;
            }
        }
        if den > 0.0 {
            num / den
        } else {
            self.prior
        }
    }
}

/// `(success, impact, weight)` with impact `psi_4 / psi4_max`.
pub fn objectives(features: &FeatureVector, hist: &AttackHistory, psi4_max: f64) -> [f64; 3] {
    let impact = if psi4_max > 0.0 {
        (features.gap() / psi4_max).clamp(0.0, 1.0)
    } else {
        0.0
    };
    [hist.success_prob(features), impact, features.weight().clamp(0.0, 1.0)]
}

/// `a` dominates `b`: no worse everywhere, strictly better somewhere.
pub fn dominates(a: &[f64; 3], b: &[f64; 3]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

pub fn pareto_nondominated<'a>(candidate: &[f64; 3], archive: impl IntoIterator<Item = &'a [f64; 3]>) -> bool {
    !archive.into_iter().any(|a| dominates(a, candidate))
}

/// Budget rate `b / (T - t)` clamped to `[0, 1]`.
pub fn budget_ratio(b: usize, t: usize, horizon: usize) -> f64 {
    assert!(t < horizon, "round {t} is not before the horizon {horizon}");
    (b as f64 / (horizon - t) as f64).clamp(0.0, 1.0)
}

/// Budget-adaptive weights `(1, 1 + gamma r, 1 + eta_w (1 - r))`.
pub fn weights(b: usize, t: usize, horizon: usize, gamma: f64, eta_w: f64) -> [f64; 3] {
    let r = budget_ratio(b, t, horizon);
    [1.0, 1.0 + gamma * r, 1.0 + eta_w * (1.0 - r)]
}

/// Chebyshev scalarization `min_j w_j f_j`.
pub fn scalarize(f: &[f64; 3], b: usize, t: usize, horizon: usize, gamma: f64, eta_w: f64) -> f64 {
    let w = weights(b, t, horizon, gamma, eta_w);
    (0..3).map(|j| w[j] * f[j]).fold(f64::INFINITY, f64::min)
}

pub fn scalarize_variant(
    variant: Scalarization,
    f: &[f64; 3],
    b: usize,
    t: usize,
    horizon: usize,
    gamma: f64,
    eta_w: f64,
) -> f64 {
    match variant {
        Scalarization::Chebyshev => scalarize(f, b, t, horizon, gamma, eta_w),
        Scalarization::Product => {
            let w = weights(b, t, horizon, gamma, eta_w);
            let total: f64 = w.iter().sum();
            (0..3).map(|j| f[j].max(0.0).powf(w[j] / total)).product()
        }
        Scalarization::Single => f[0] * f[1],
    }
}

/// Nearest-rank quantile of ascending `sorted`: the `ceil(p n)`-th order
/// statistic, or the minimum when `p = 0`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty archive");
    let n = sorted.len();
    let rank = (p.clamp(0.0, 1.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Remaining budget plus the score and objective archives.
#[derive(Debug, Clone)]
pub struct BudgetState {
    total: usize,
    remaining: usize,
    horizon: usize,
    scores: Vec<f64>,
    pareto: VecDeque<[f64; 3]>,
    pareto_cap: usize,
}

/// Outcome of one gate decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub attack: bool,
    pub threshold: f64,
    pub nondominated: bool,
}

impl BudgetState {
    pub fn new(total: usize, horizon: usize, pareto_cap: usize) -> Self {
        Self {
            total,
            remaining: total,
            horizon,
            scores: Vec::new(),
            pareto: VecDeque::new(),
            pareto_cap: pareto_cap.max(1),
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn used(&self) -> usize {
        self.total - self.remaining
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn archive_len(&self) -> usize {
        self.scores.len()
    }

    pub fn sorted_scores(&self) -> &[f64] {
        &self.scores
    }

    fn record(&mut self, v: f64) {
        let pos = self.scores.partition_point(|x| *x <= v);
        self.scores.insert(pos, v);
    }

    /// Quantile threshold at round `t` for the current archive.
    pub fn threshold(&self, t: usize) -> f64 {
        let p = 1.0 - budget_ratio(self.remaining, t, self.horizon);
        nearest_rank(&self.scores, p)
    }

    /// Record `v`, then attack iff budget remains, `v` reaches the quantile
    /// threshold and (when `objectives` is given) the objective vector is not
    /// dominated by the recent archive.
    pub fn should_attack(&mut self, v: f64, t: usize, objectives: Option<&[f64; 3]>) -> Decision {
        self.record(v);
        let threshold = self.threshold(t);
        let nondominated = match objectives {
            Some(f) => {
                let nd = pareto_nondominated(f, self.pareto.iter());
                if self.pareto.len() == self.pareto_cap {
                    self.pareto.pop_front();
                }
                self.pareto.push_back(*f);
                nd
            }
            None => true,
        };
        Decision {
            attack: self.remaining > 0 && v >= threshold && nondominated,
            threshold,
            nondominated,
        }
    }

    /// Spend one unit of budget.
    pub fn consume(&mut self) {
        assert!(self.remaining > 0, "attack budget exhausted");
        self.remaining -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_is_prior() {
        let h = AttackHistory::new(1.0, 0.5);
        assert_eq!(h.success_prob(&FeatureVector([0.0; 5])), 0.5);
        assert_eq!(h.success_rate(), 0.0);
    }

    #[test]
    fn single_success_at_query() {
        let mut h = AttackHistory::new(1.0, 0.5);
        let f = FeatureVector([0.1, 0.2, 0.3, 0.4, 0.5]);
        h.push(&f, true);
        assert_eq!(h.success_prob(&f), 1.0);
    }

    #[test]
    fn success_rate_counts() {
        let mut h = AttackHistory::new(1.0, 0.5);
        let f = FeatureVector([0.0; 5]);
        h.push(&f, true);
        h.push(&f, false);
        h.push(&f, true);
        assert!((h.success_rate() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn objective_normalization() {
        let h = AttackHistory::new(1.0, 0.5);
        let f = FeatureVector([0.5, 1.0, 0.0, 2.0, 0.1]);
        assert_eq!(objectives(&f, &h, 2.0), [0.5, 1.0, 1.0]);
    }

    #[test]
    fn dominance_cases() {
        assert!(pareto_nondominated(&[0.5, 0.5, 0.5], []));
        assert!(!pareto_nondominated(&[0.5, 0.5, 0.5], [&[1.0, 1.0, 1.0]]));
        assert!(pareto_nondominated(&[0.5, 0.5, 0.5], [&[0.5, 0.5, 0.5]]));
    }

    #[test]
    fn scalarize_hand_values() {
        assert_eq!(scalarize(&[0.5, 0.2, 0.9], 10, 0, 100, 0.0, 0.0), 0.2);
        let w = weights(0, 5, 100, 0.5, 0.5);
        assert_eq!(w, [1.0, 1.0, 1.5]);
        let v = scalarize(&[0.4, 0.4, 0.4], 100, 4000, 5000, 0.5, 0.5);
        assert!((v - 0.4).abs() < 1e-15);
        let w = weights(100, 4000, 5000, 0.5, 0.5);
        assert!((w[1] * 0.4 - 0.42).abs() < 1e-12);
        assert!((w[2] * 0.4 - 0.58).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn scalarize_past_horizon_panics() {
        scalarize(&[0.1; 3], 1, 10, 10, 0.5, 0.5);
    }

    #[test]
    fn permissive_and_depleted_limits() {
        let mut b = BudgetState::new(50, 100, 10);
        for t in 60..70 {
            assert!(b.should_attack(0.0, t, None).attack);
            b.consume();
        }
        let mut z = BudgetState::new(0, 100, 10);
        assert!(!z.should_attack(1.0, 0, None).attack);
    }

    #[test]
    fn nearest_rank_definition() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(nearest_rank(&s, 0.0), 1.0);
        assert_eq!(nearest_rank(&s, 0.25), 1.0);
        assert_eq!(nearest_rank(&s, 0.26), 2.0);
        assert_eq!(nearest_rank(&s, 1.0), 4.0);
    }
}
