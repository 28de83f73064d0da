mod common;

use poisonlab::environment::{ContextRound, EnvConfig, Environment, RewardFamily};
use poisonlab::numerics::Rng;
use poisonlab::victims::{self, RobustBandit, Victim, VictimConfig, VictimKind};

/// Whether each round's choice attained the maximum expected reward.
fn play(victim: &mut dyn Victim, env: &mut Environment, rounds: usize) -> Vec<bool> {
    (0..rounds)
        .map(|_| {
            let round = env.next_round();
            let a = victim.select(&round);
            let r = env.pull(&round, a);
            victim.update(&round, a, r);
            env.regret(&round, a) == 0.0
        })
        .collect()
}

#[test]
fn neural_ucb_learns_noiseless_linear_environment() {
    let env_cfg = EnvConfig {
        family: RewardFamily::Linear,
        d: 4,
        k: 3,
        sigma: 0.0,
        lipschitz: 3.0,
        ..EnvConfig::default()
    };
    let mut env = Environment::new(env_cfg, 1000, 5).unwrap();
    let mut v = victims::build(&VictimConfig::default(), 4, 3, 1000, Rng::new(6)).unwrap();
    let hits = play(v.as_mut(), &mut env, 1000);
    let tail = hits[900..].iter().filter(|h| **h).count();
    assert!(tail >= 90, "{tail}/100");
}

#[test]
fn every_victim_beats_uniform_play() {
    let env_cfg = EnvConfig {
        family: RewardFamily::Linear,
        d: 4,
        k: 4,
        lipschitz: 3.0,
        ..EnvConfig::default()
    };
    for kind in [
        VictimKind::NeuralUcb,
        VictimKind::NeuralTs,
        VictimKind::NeuralLinUcb,
        VictimKind::RNeuralUcb,
        VictimKind::RobustBandit,
    ] {
        let mut env = Environment::new(env_cfg.clone(), 600, 7).unwrap();
        let cfg = VictimConfig {
            algorithm: kind,
            train_steps: 10,
            ftrl_eta: Some(0.5),
            ..VictimConfig::default()
        };
        let mut v = victims::build(&cfg, 4, 4, 600, Rng::new(8)).unwrap();
        let hits = play(v.as_mut(), &mut env, 600);
        let rate = hits[300..].iter().filter(|h| **h).count() as f64 / 300.0;
        assert!(rate > 0.4, "{kind:?}: {rate}");
    }
}

/// Straight-line replay of importance-weighted ridge plus exponential weights.
struct RobustOracle {
    a: Vec<f64>,
    b: Vec<f64>,
    theta_sum: Vec<f64>,
    p: usize,
}

impl RobustOracle {
    fn policy(&self, phis: &[Vec<f64>], eta: f64) -> Vec<f64> {
        let s: Vec<f64> = phis.iter().map(|f| (eta * common::dot(&self.theta_sum, f)).exp()).collect();
        let z: f64 = s.iter().sum();
        s.iter().map(|v| v / z).collect()
    }

    fn update(&mut self, phi: &[f64], w: f64, r: f64) {
        let p = self.p;
        for i in 0..p {
            for j in 0..p {
                self.a[i * p + j] += w * phi[i] * phi[j];
            }
            self.b[i] += w * r * phi[i];
        }
        let theta = common::lu_solve(&self.a, p, &self.b);
        for (s, t) in self.theta_sum.iter_mut().zip(theta) {
            *s += t;
        }
    }
}

#[test]
fn robust_bandit_two_arm_trajectory() {
    let cfg = VictimConfig {
        algorithm: VictimKind::RobustBandit,
        hidden: vec![8],
        ftrl_eta: Some(0.3),
        ..VictimConfig::default()
    };
    let mut v = RobustBandit::new(&cfg, 2, 2, 400, Rng::new(9)).unwrap();
    let round = ContextRound::new(0, vec![vec![0.6, -0.2], vec![-0.4, 0.5]]).unwrap();
    let phis: Vec<Vec<f64>> = round.contexts.iter().map(|x| v.features(x)).collect();
    let p = phis[0].len();
    let mut a = vec![0.0; p * p];
    for i in 0..p {
        a[i * p + i] = cfg.ridge;
    }
    let mut oracle = RobustOracle {
        a,
        b: vec![0.0; p],
        theta_sum: vec![0.0; p],
        p,
    };
    let mut last = 0.0;
    for t in 0..400 {
        let pol = v.policy(&round);
        let want = oracle.policy(&phis, 0.3);
        assert!(common::max_rel_err(&pol, &want, 1e-12) < 1e-8, "t={t}");
        if t >= 50 {
            assert!(pol[0] >= last - 1e-12, "t={t}: {} < {last}", pol[0]);
        }
        last = pol[0];
        let arm = v.select(&round);
        let r = if arm == 0 { 1.0 } else { 0.0 };
        v.update(&round, arm, r);
        oracle.update(&phis[arm], (1.0 / pol[arm]).min(cfg.iw_clip), r);
    }
    assert!(last > 0.95, "{last}");
}
