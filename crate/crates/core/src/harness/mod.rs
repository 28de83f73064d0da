//! Configuration, the game loop, sweeps and plot-data series.

pub mod config;
pub mod emit;
pub mod run;
pub mod sweep;

pub use config::{presets, LogLevel, RunConfig, RunSection, OUTPUT_ENV};
pub use emit::{emit_series, SeriesKind};
pub use run::{read_log, run, write_run, RoundLog, RunOutput, SummaryMetrics};
pub use sweep::{sweep, SweepCell};
