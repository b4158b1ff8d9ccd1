//! File layout of an output directory.
//!
//! ```text
//! <out>/config.toml
//! <out>/timings.txt                     wall-clock per stage (not deterministic)
//! <out>/seed<S>/data/<split>.txt         dataset splits
//! <out>/seed<S>/checkpoints/<model>.ckpt
//! <out>/seed<S>/audit.json               per-seed metric suite
//! <out>/report/...                       see `report`
//! ```

use std::path::{Path, PathBuf};
use synthbias::SplitName;

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "CAUSAL_INFOMIN_OUT";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputLayout { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.txt")
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.root.join(format!("seed{seed}"))
    }

    pub fn split(&self, seed: u64, split: SplitName) -> PathBuf {
        self.seed_dir(seed).join("data").join(format!("{}.txt", split.as_str()))
    }

    pub fn checkpoint(&self, seed: u64, model: &str) -> PathBuf {
        self.seed_dir(seed).join("checkpoints").join(format!("{model}.ckpt"))
    }

    pub fn audit(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("audit.json")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn results_json(&self) -> PathBuf {
        self.report_dir().join("results.json")
    }

    pub fn summary(&self) -> PathBuf {
        self.report_dir().join("summary.txt")
    }

    pub fn flat_metrics(&self) -> PathBuf {
        self.report_dir().join("metrics.txt")
    }

    pub fn lambda_csv(&self, seed: u64, model: &str) -> PathBuf {
        self.report_dir().join("lambda").join(format!("seed{seed}_{model}.csv"))
    }

    pub fn loss_csv(&self, seed: u64) -> PathBuf {
        self.report_dir().join(format!("te_d_loss_seed{seed}.csv"))
    }

    pub fn modal_csv(&self, seed: u64) -> PathBuf {
        self.report_dir().join(format!("modal_by_group_seed{seed}.csv"))
    }
}

/// Output directory: `--out` if given, else the environment override, else the config value.
pub fn resolve_output_dir(cli: Option<&Path>, configured: &str) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        Some(env) => PathBuf::from(env),
        None => PathBuf::from(configured),
    }
}
