use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacker::AttackerConfig;
use crate::environment::EnvConfig;
use crate::error::{Error, Result};
use crate::victims::VictimConfig;

/// Environment variable naming the output root.
pub const OUTPUT_ENV: &str = "POISONLAB_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogLevel {
    /// One JSON line per round plus the summary.
    Rounds,
    /// Summary only.
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub name: String,
    pub seed: u64,
    pub horizon: usize,
    /// Output directory; defaults to `$POISONLAB_OUT/<name>` or `runs/<name>`.
    pub output: Option<PathBuf>,
    pub log: LogLevel,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            name: "run".into(),
            seed: 0,
            horizon: 5000,
            output: None,
            log: LogLevel::Rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub environment: EnvConfig,
    pub victim: VictimConfig,
    pub attacker: AttackerConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(ds) = &cfg.environment.dataset {
            if ds.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.environment.dataset = Some(dir.join(ds));
                }
            }
        }
        Ok(cfg)
    }

    /// A file path, or the name of a built-in preset.
    pub fn resolve(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.exists() {
            return Self::load(path);
        }
        match presets::get(spec) {
            Some(text) => Self::from_toml(text),
            None => Err(Error::config("config", format!("`{spec}` is neither a file nor a preset"))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.horizon == 0 {
            return Err(Error::config("run.horizon", "must be positive"));
        }
        if self.run.name.is_empty() || self.run.name.contains(['/', '\\']) {
            return Err(Error::config("run.name", "must be a non-empty plain name"));
        }
        self.environment.validate()?;
        self.victim.validate()?;
        self.attacker.validate()?;
        let b = self.attacker.budget_for(self.run.horizon);
        if b > self.run.horizon {
            return Err(Error::config("attacker.budget", "cannot exceed the horizon"));
        }
        Ok(())
    }

    pub fn budget(&self) -> usize {
        match self.attacker.strategy {
            crate::attacker::Strategy::None => 0,
            _ => self.attacker.budget_for(self.run.horizon),
        }
    }

    /// Output directory for a given seed.
    pub fn output_dir(&self, seed: u64) -> PathBuf {
        let base = self.run.output.clone().unwrap_or_else(|| output_root().join(&self.run.name));
        base.join(format!("seed-{seed}"))
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub mod presets {
    pub const PAPER_DEFAULT: &str = include_str!("../../../../presets/paper-default.toml");
    pub const SYNTHETIC_ACCEPTANCE: &str = include_str!("../../../../presets/synthetic-acceptance.toml");
    pub const SMOKE: &str = include_str!("../../../../presets/smoke.toml");

    pub const NAMES: [&str; 3] = ["paper-default", "synthetic-acceptance", "smoke"];

    pub fn get(name: &str) -> Option<&'static str> {
        match name {
            "paper-default" => Some(PAPER_DEFAULT),
            "synthetic-acceptance" => Some(SYNTHETIC_ACCEPTANCE),
            "smoke" => Some(SMOKE),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for name in presets::NAMES {
            RunConfig::resolve(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_field_is_named() {
        let err = RunConfig::from_toml("[victim]\nexplor = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("explor"), "{err}");
    }

    #[test]
    fn invalid_value_is_named() {
        let err = RunConfig::from_toml("[attacker.gp]\nlengthscale = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("attacker.gp.lengthscale"), "{err}");
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::resolve("smoke").unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
