use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use poisonlab::harness::{self, sweep, RunConfig, SeriesKind};

/// Context-poisoning attack lab for neural contextual bandits.
#[derive(Parser)]
#[command(name = "poisonlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one game from a config file or preset name.
    Run {
        config: String,
        /// Override the seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every config matching a glob over several seeds.
    Sweep {
        pattern: String,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Directory for sweep.csv and aggregate.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a round log into a plot-data CSV.
    Emit {
        log: PathBuf,
        /// regret-curve, lambda-hist or threshold-trace.
        #[arg(long)]
        kind: String,
        /// Output file; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print a built-in preset.
    Preset { name: String },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = RunConfig::resolve(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(o) = out {
                cfg.run.output = Some(o);
            }
            let result = harness::run(&cfg)?;
            let dir = cfg.output_dir(cfg.run.seed);
            harness::write_run(&result, &dir, cfg.run.log)?;
            let s = &result.summary;
            info!(
                "victim regret {:.3}, attacks {}/{}, target pull ratio {:.3}, {:.1}s",
                s.victim_regret, s.attacks, s.budget, s.target_pull_ratio, s.wall_clock_s
            );
            println!("{}", dir.display());
        }
        Command::Sweep {
            pattern,
            seeds,
            jobs,
            out,
        } => {
            let configs = sweep::load_glob(&pattern)?;
            let cells = sweep::sweep(&configs, seeds, jobs, true)?;
            let dir = out.unwrap_or_else(|| harness::config::output_root().join("sweep"));
            fs::create_dir_all(&dir)?;
            sweep::write_cells(&cells, &dir.join("sweep.csv"))?;
            sweep::write_aggregate(&cells, &dir.join("aggregate.csv"))?;
            let failed = cells.iter().filter(|c| c.result.is_err()).count();
            info!("{} cells, {failed} failed", cells.len());
            println!("{}", dir.display());
        }
        Command::Emit { log, kind, output } => {
            let kind: SeriesKind = kind.parse()?;
            let logs = harness::read_log(&log).with_context(|| format!("reading {}", log.display()))?;
            match output {
                Some(p) => harness::emit_series(&logs, kind, fs::File::create(&p)?)?,
                None => harness::emit_series(&logs, kind, io::stdout().lock())?,
            }
        }
        Command::Preset { name } => {
            let text = harness::presets::get(&name).with_context(|| {
                format!("unknown preset `{name}` (available: {})", harness::presets::NAMES.join(", "))
            })?;
            io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}
