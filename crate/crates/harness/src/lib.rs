//! Experiment orchestration: configuration, the per-seed pipeline
//! (generate → baseline → ATE-D / TE-D → audit), checkpoints and reports.
//!
//! Every stage draws its randomness from [`config::stage_seed`], so a run is
//! a pure function of the config and the seed list.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod layout;
pub mod pipeline;
pub mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, ModelKind, CHECKPOINT_FORMAT_VERSION};
pub use config::{load_config, stage_seed, ExperimentConfig, Method, Stage, CONFIG_FORMAT_VERSION};
pub use pipeline::{run_experiment, run_seed, ExperimentOutcome, MetricsReport, ModelMetrics, SeedReport};

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {path}: {reason}")]
    Config { path: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("unsupported {what} format version {found} (expected {expected})")]
    UnsupportedVersion { what: String, found: u32, expected: u32 },
    #[error("every seed failed: {0}")]
    AllSeedsFailed(String),
    #[error(transparent)]
    Synth(#[from] synthbias::SynthError),
    #[error(transparent)]
    Baseline(#[from] baseline::BaselineError),
    #[error(transparent)]
    Ate(#[from] ate_d::AteError),
    #[error(transparent)]
    TeD(#[from] te_d::TeDError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Net(#[from] netcore::NetError),
    #[error(transparent)]
    Info(#[from] infomath::InfoError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Writes `contents` to `path`, creating missing parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let io = |source| HarnessError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

/// Reads a UTF-8 file, mapping failures to [`HarnessError::Io`].
pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}
