use std::io::Write;
use std::str::FromStr;

use super::run::RoundLog;
use crate::error::{Error, Result};

pub const LAMBDA_BINS: usize = 10;

/// Plot-data series derived from a round log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// `t,regret,cumulative_regret`
    RegretCurve,
    /// `bin_lo,bin_hi,lambda1,lambda2,lambda3`: executed-attack counts per bin.
    LambdaHist,
    /// `t,threshold,score,attacked`
    ThresholdTrace,
}

impl FromStr for SeriesKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regret-curve" => Ok(SeriesKind::RegretCurve),
            "lambda-hist" => Ok(SeriesKind::LambdaHist),
            "threshold-trace" => Ok(SeriesKind::ThresholdTrace),
            other => Err(Error::UnknownSeries(other.to_string())),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn emit_series<W: Write>(logs: &[RoundLog], kind: SeriesKind, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match kind {
        SeriesKind::RegretCurve => {
            w.write_record(["t", "regret", "cumulative_regret"])?;
            let mut cum = 0.0;
            for l in logs {
                cum += l.regret;
                w.write_record([l.t.to_string(), l.regret.to_string(), cum.to_string()])?;
            }
        }
        SeriesKind::LambdaHist => {
            w.write_record(["bin_lo", "bin_hi", "lambda1", "lambda2", "lambda3"])?;
            for (b, row) in lambda_histogram(logs).iter().enumerate() {
                let lo = b as f64 / LAMBDA_BINS as f64;
                let hi = (b + 1) as f64 / LAMBDA_BINS as f64;
                w.write_record([
                    lo.to_string(),
                    hi.to_string(),
                    row[0].to_string(),
                    row[1].to_string(),
                    row[2].to_string(),
                ])?;
            }
        }
        SeriesKind::ThresholdTrace => {
            w.write_record(["t", "threshold", "score", "attacked"])?;
            for l in logs {
                w.write_record([
                    l.t.to_string(),
                    opt(l.threshold),
                    opt(l.score),
                    (l.attacked as u8).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Counts of executed `lambda` components in ten equal bins of `[0, 1]`;
/// the value 1 falls in the last bin.
pub fn lambda_histogram(logs: &[RoundLog]) -> [[usize; 3]; LAMBDA_BINS] {
    let mut h = [[0; 3]; LAMBDA_BINS];
    for l in logs.iter().filter(|l| l.attacked) {
        if let Some(lam) = l.lambda {
            for i in 0..3 {
                let b = ((lam[i] * LAMBDA_BINS as f64) as usize).min(LAMBDA_BINS - 1);
                h[b][i] += 1;
            }
        }
    }
    h
}
