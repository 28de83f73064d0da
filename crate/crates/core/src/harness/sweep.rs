use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;

use super::config::RunConfig;
use super::run::{run, write_run, SummaryMetrics};
use crate::error::{Error, Result};

/// One `(config, seed)` cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub config: String,
    pub seed: u64,
    pub result: std::result::Result<SummaryMetrics, String>,
}

/// Configs matching a glob pattern, sorted by path.
pub fn load_glob(pattern: &str) -> Result<Vec<(String, RunConfig)>> {
    let paths = glob::glob(pattern).map_err(|e| Error::config("sweep", e.to_string()))?;
    let mut out = Vec::new();
    for p in paths {
        let p = p.map_err(|e| Error::Io(e.into()))?;
        let cfg = RunConfig::load(&p)?;
        out.push((p.display().to_string(), cfg));
    }
    if out.is_empty() {
        return Err(Error::config("sweep", format!("no config matches `{pattern}`")));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Run every config under seeds `seed, seed + 1, ..`, `jobs` cells at a time.
/// A failing cell is recorded and the sweep continues. When `write` is set,
/// each cell's files go to its output directory.
pub fn sweep(configs: &[(String, RunConfig)], seeds: usize, jobs: usize, write: bool) -> Result<Vec<SweepCell>> {
    let cells: Vec<(String, RunConfig)> = configs
        .iter()
        .flat_map(|(label, cfg)| {
            (0..seeds as u64).map(move |i| {
                let mut c = cfg.clone();
                c.run.seed = cfg.run.seed + i;
                (label.clone(), c)
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    let results = pool.install(|| {
        cells
            .par_iter()
            .map(|(label, cfg)| {
                let result = run(cfg).and_then(|out| {
                    if write {
                        write_run(&out, &cfg.output_dir(cfg.run.seed), cfg.run.log)?;
                    }
                    Ok(out.summary)
                });
                match &result {
                    Ok(s) => info!("{label} seed {}: regret {:.3}", cfg.run.seed, s.victim_regret),
                    Err(e) => warn!("{label} seed {} failed: {e}", cfg.run.seed),
                }
                SweepCell {
                    config: label.clone(),
                    seed: cfg.run.seed,
                    result: result.map_err(|e| e.to_string()),
                }
            })
            .collect()
    });
    Ok(results)
}

pub fn write_cells(cells: &[SweepCell], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["config", "status", "error"];
    header.extend(SummaryMetrics::HEADER);
    w.write_record(&header)?;
    for c in cells {
        let mut r = vec![c.config.clone()];
        match &c.result {
            Ok(s) => {
                r.push("ok".into());
                r.push(String::new());
                r.extend(s.record());
            }
            Err(e) => {
                r.push("failed".into());
                r.push(e.clone());
                r.extend(std::iter::repeat_n(String::new(), SummaryMetrics::HEADER.len()));
                r[4] = c.seed.to_string();
            }
        }
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

const AGGREGATED: [&str; 7] = [
    "victim_regret",
    "attacker_reward",
    "target_pull_ratio",
    "attacks",
    "lambda1_mean",
    "lambda2_mean",
    "lambda3_mean",
];

fn metric(s: &SummaryMetrics, name: &str) -> f64 {
    match name {
        "victim_regret" => s.victim_regret,
        "attacker_reward" => s.attacker_reward,
        "target_pull_ratio" => s.target_pull_ratio,
        "attacks" => s.attacks as f64,
        "lambda1_mean" => s.lambda_mean[0],
        "lambda2_mean" => s.lambda_mean[1],
        "lambda3_mean" => s.lambda_mean[2],
        _ => unreachable!("unknown metric {name}"),
    }
}

/// Mean and standard deviation of the headline metrics per config.
pub fn write_aggregate(cells: &[SweepCell], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["config".to_string(), "ok".into(), "failed".into()];
    for m in AGGREGATED {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)?;
    let mut labels: Vec<&str> = Vec::new();
    for c in cells {
        if !labels.contains(&c.config.as_str()) {
            labels.push(&c.config);
        }
    }
    for label in labels {
        let group: Vec<&SweepCell> = cells.iter().filter(|c| c.config == label).collect();
        let ok: Vec<&SummaryMetrics> = group.iter().filter_map(|c| c.result.as_ref().ok()).collect();
        let mut r = vec![label.to_string(), ok.len().to_string(), (group.len() - ok.len()).to_string()];
        for m in AGGREGATED {
            let xs: Vec<f64> = ok.iter().map(|s| metric(s, m)).collect();
            let (mu, sd) = mean_std(&xs);
            r.push(mu.to_string());
            r.push(sd.to_string());
        }
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_seeds_two_budgets() {
        let base = RunConfig::resolve("smoke").unwrap();
        let mut a = base.clone();
        a.attacker.budget = Some(1);
        let mut b = base;
        b.attacker.budget = Some(2);
        let cfgs = vec![("a".to_string(), a), ("b".to_string(), b)];
        let cells = sweep(&cfgs, 2, 2, false).unwrap();
        let order: Vec<(&str, u64)> = cells.iter().map(|c| (c.config.as_str(), c.seed)).collect();
        assert_eq!(order, vec![("a", 0), ("a", 1), ("b", 0), ("b", 1)]);
        assert!(cells.iter().all(|c| c.result.is_ok()));
    }

    #[test]
    fn failures_are_recorded() {
        let mut bad = RunConfig::resolve("smoke").unwrap();
        bad.environment.dataset = Some("/nonexistent/data.csv".into());
        let cells = sweep(&[("bad".into(), bad)], 1, 1, false).unwrap();
        assert!(cells[0].result.is_err());
        let dir = tempfile::tempdir().unwrap();
        write_cells(&cells, &dir.path().join("s.csv")).unwrap();
        write_aggregate(&cells, &dir.path().join("a.csv")).unwrap();
    }

    #[test]
    fn mean_std_hand_values() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
