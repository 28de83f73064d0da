use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{LogLevel, RunConfig};
use crate::attacker;
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::gp::AttackParams;
use crate::numerics::Rng;
use crate::victims;

const VICTIM_STREAM: u64 = 10;
const ATTACKER_STREAM: u64 = 20;

/// One line of the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-indexed round.
    pub t: usize,
    pub attacked: bool,
    pub score: Option<f64>,
    pub threshold: Option<f64>,
    pub lambda: Option<AttackParams>,
    pub linf: f64,
    pub target: Option<usize>,
    pub arm: usize,
    pub regret: f64,
    pub attack_reward: Option<f64>,
    pub success: Option<bool>,
    pub est_gap: Option<f64>,
    pub retrained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryMetrics {
    pub name: String,
    pub seed: u64,
    pub horizon: usize,
    pub victim: String,
    pub strategy: String,
    pub budget: usize,
    pub attacks: usize,
    pub victim_regret: f64,
    pub attacker_reward: f64,
    /// Fraction of attacked rounds where the victim chose the target.
    pub target_pull_ratio: f64,
    pub lambda_mean: [f64; 3],
    pub lambda_std: [f64; 3],
    pub retrains: usize,
    /// Kept out of the summary CSV so that file is reproducible.
    pub wall_clock_s: f64,
}

impl SummaryMetrics {
    pub const HEADER: [&'static str; 18] = [
        "name",
        "seed",
        "horizon",
        "victim",
        "strategy",
        "budget",
        "attacks",
        "budget_used",
        "victim_regret",
        "attacker_reward",
        "target_pull_ratio",
        "lambda1_mean",
        "lambda1_std",
        "lambda2_mean",
        "lambda2_std",
        "lambda3_mean",
        "lambda3_std",
        "retrains",
    ];

    pub fn budget_used(&self) -> f64 {
        if self.budget == 0 {
            0.0
        } else {
            self.attacks as f64 / self.budget as f64
        }
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.name.clone(),
            self.seed.to_string(),
            self.horizon.to_string(),
            self.victim.clone(),
            self.strategy.clone(),
            self.budget.to_string(),
            self.attacks.to_string(),
            self.budget_used().to_string(),
            self.victim_regret.to_string(),
            self.attacker_reward.to_string(),
            self.target_pull_ratio.to_string(),
        ];
        for i in 0..3 {
            r.push(self.lambda_mean[i].to_string());
            r.push(self.lambda_std[i].to_string());
        }
        r.push(self.retrains.to_string());
        r
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(Self::HEADER)?;
        w.write_record(self.record())?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: SummaryMetrics,
    pub logs: Vec<RoundLog>,
}

/// Play the full game for one seed and check the run invariants.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let horizon = cfg.run.horizon;
    let seed = cfg.run.seed;
    let (d, k) = (cfg.environment.d, cfg.environment.k);
    let mut env = Environment::new(cfg.environment.clone(), horizon, seed)?;
    let root = Rng::new(seed);
    let mut victim = victims::build(&cfg.victim, d, k, horizon, root.fork(VICTIM_STREAM))?;
    let mut atk_cfg = cfg.attacker.clone();
    atk_cfg.budget = Some(cfg.budget());
    let mut atk = attacker::build(&atk_cfg, d, k, horizon, root.fork(ATTACKER_STREAM))?;

    let mut logs = Vec::with_capacity(horizon);
    let mut total_regret = 0.0;
    for t in 0..horizon {
        let round = env.next_round();
        let proposal = atk.propose(t, &round);
        let arm = victim.select(&proposal.shown);
        let reward = env.pull(&round, arm);
        let regret = env.regret(&round, arm);
        victim.update(&proposal.shown, arm, reward);
        let outcome = atk.observe(t, &proposal, arm);
        total_regret += regret;
        logs.push(RoundLog {
            t: t + 1,
            attacked: proposal.attacked,
            score: proposal.score,
            threshold: proposal.threshold,
            lambda: proposal.lambda,
            linf: proposal.linf,
            target: proposal.target,
            arm,
            regret,
            attack_reward: outcome.reward,
            success: outcome.success,
            est_gap: proposal.est_gap,
            retrained: outcome.retrained,
        });
    }

    let summary = summarize(cfg, &logs, atk.budget_total(), start.elapsed().as_secs_f64());
    check_invariants(cfg, &logs, &summary, total_regret, atk.budget_used())?;
    Ok(RunOutput { summary, logs })
}

pub fn summarize(cfg: &RunConfig, logs: &[RoundLog], budget: usize, wall_clock_s: f64) -> SummaryMetrics {
    let attacked: Vec<&RoundLog> = logs.iter().filter(|l| l.attacked).collect();
    let n = attacked.len();
    let hits = attacked.iter().filter(|l| l.success == Some(true)).count();
    let lambdas: Vec<AttackParams> = attacked.iter().filter_map(|l| l.lambda).collect();
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    if !lambdas.is_empty() {
        let m = lambdas.len() as f64;
        for i in 0..3 {
            mean[i] = lambdas.iter().map(|l| l[i]).sum::<f64>() / m;
            std[i] = (lambdas.iter().map(|l| (l[i] - mean[i]).powi(2)).sum::<f64>() / m).sqrt();
        }
    }
    SummaryMetrics {
        name: cfg.run.name.clone(),
        seed: cfg.run.seed,
        horizon: cfg.run.horizon,
        victim: cfg.victim.algorithm.name().to_string(),
        strategy: cfg.attacker.strategy.name().to_string(),
        budget,
        attacks: n,
        victim_regret: logs.iter().map(|l| l.regret).sum(),
        attacker_reward: logs.iter().filter_map(|l| l.attack_reward).sum(),
        target_pull_ratio: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        lambda_mean: mean,
        lambda_std: std,
        retrains: logs.iter().filter(|l| l.retrained).count(),
        wall_clock_s,
    }
}

fn check_invariants(
    cfg: &RunConfig,
    logs: &[RoundLog],
    s: &SummaryMetrics,
    online_regret: f64,
    used: usize,
) -> Result<()> {
    let fail = |m: String| Err(Error::Invariant(m));
    if s.attacks > s.budget {
        return fail(format!("{} attacks exceed budget {}", s.attacks, s.budget));
    }
    if s.attacks != used {
        return fail(format!("{} logged attacks but {} budget units spent", s.attacks, used));
    }
    if (s.victim_regret - online_regret).abs() > 1e-9 * online_regret.abs().max(1.0) {
        return fail("logged regret disagrees with the online sum".into());
    }
    let eps = cfg.attacker.perturber.epsilon;
    for l in logs {
        if l.regret < 0.0 {
            return fail(format!("negative regret at round {}", l.t));
        }
        if l.linf > eps || l.attacked != (l.linf > 0.0) {
            return fail(format!("perturbation record inconsistent at round {}", l.t));
        }
    }
    Ok(())
}

/// Write the round log, summary and timing files of one run.
pub fn write_run(out: &RunOutput, dir: &Path, level: LogLevel) -> Result<()> {
    fs::create_dir_all(dir)?;
    if level == LogLevel::Rounds {
        write_log(&out.logs, &dir.join("rounds.jsonl"))?;
    }
    out.summary.write_csv(&dir.join("summary.csv"))?;
    let mut w = csv::Writer::from_path(dir.join("timing.csv"))?;
    w.write_record(["name", "seed", "horizon", "budget", "wall_clock_s"])?;
    let s = &out.summary;
    w.write_record([
        s.name.clone(),
        s.seed.to_string(),
        s.horizon.to_string(),
        s.budget.to_string(),
        format!("{:.6}", s.wall_clock_s),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn write_log(logs: &[RoundLog], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for l in logs {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<RoundLog>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
