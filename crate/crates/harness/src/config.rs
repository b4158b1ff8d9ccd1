//! Experiment configuration, stored as TOML.
//!
//! Every field has a default, so a minimal file may contain only the keys it
//! changes. Unknown keys are rejected. See the repository README for the full
//! grammar.

use crate::{HarnessError, Result};
use ate_d::AutoencoderConfig;
use metrics::ProbeConfig;
use netcore::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use synthbias::{BiasSpec, SynthError};
use te_d::TeDConfig;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Which debiasing methods a run includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    AteD,
    TeD,
    #[default]
    Both,
}

impl Method {
    pub fn runs_ate(self) -> bool {
        matches!(self, Method::AteD | Method::Both)
    }

    pub fn runs_te(self) -> bool {
        matches!(self, Method::TeD | Method::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            weight_decay: d.weight_decay,
            grad_clip_norm: d.grad_clip_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AteSection {
    /// Dictionary size.
    pub k: usize,
    pub latent_factor: usize,
    pub hidden: usize,
    pub ae_epochs: usize,
    pub ae_batch_size: usize,
    pub ae_learning_rate: f64,
    pub head_epochs: usize,
    pub head_learning_rate: f64,
}

impl Default for AteSection {
    fn default() -> Self {
        AteSection {
            k: 10,
            latent_factor: 4,
            hidden: 16,
            ae_epochs: 5,
            ae_batch_size: 256,
            ae_learning_rate: 1e-3,
            head_epochs: 5,
            head_learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeSection {
    pub alpha: f64,
    pub eps: f64,
    pub factor: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TeSection {
    fn default() -> Self {
        TeSection { alpha: 0.1, eps: 0.5, factor: 4, epochs: 5, learning_rate: 1e-3, batch_size: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    /// Number of highest-bias groups on which λ is reported.
    pub lambda_groups: usize,
    pub bootstrap_resamples: usize,
    pub probe_hidden: usize,
    pub probe_epochs: usize,
    pub probe_learning_rate: f64,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection {
            lambda_groups: 2,
            bootstrap_resamples: 100_000,
            probe_hidden: 32,
            probe_epochs: 20,
            probe_learning_rate: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    pub bias_spec: BiasSpec,
    pub train: TrainSection,
    pub ate: AteSection,
    pub te: TeSection,
    pub audit: AuditSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            format_version: CONFIG_FORMAT_VERSION,
            method: Method::Both,
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: "causal-infomin-out".into(),
            bias_spec: BiasSpec::default(),
            train: TrainSection::default(),
            ate: AteSection::default(),
            te: TeSection::default(),
            audit: AuditSection::default(),
        }
    }
}

/// Independent seed streams for the stages of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Baseline = 1,
    Autoencoder = 2,
    Dictionary = 3,
    AteHead = 4,
    TeD = 5,
    Probe = 6,
    Bootstrap = 7,
}

pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    let s = stage as u64;
    seed.wrapping_mul(0xA076_1D64_78BD_642F) ^ s.wrapping_mul(0xE703_7ED1_A0B4_28DB) ^ (s << 48)
}

fn invalid(path: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config { path: path.to_string(), reason: reason.into() }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive and finite, got {v}")))
    }
}

fn nonzero(path: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(invalid(path, "must be >= 1"))
    }
}

impl ExperimentConfig {
    /// Checks every field; errors name the offending key path.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(HarnessError::UnsupportedVersion {
                what: "config".into(),
                found: self.format_version,
                expected: CONFIG_FORMAT_VERSION,
            });
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must list at least one seed"));
        }
        if self.output_dir.is_empty() {
            return Err(invalid("output_dir", "must not be empty"));
        }
        self.bias_spec.validate().map_err(|e| match e {
            SynthError::InvalidSpec { field, reason } => invalid(&format!("bias_spec.{field}"), reason),
            other => invalid("bias_spec", other.to_string()),
        })?;

        let t = &self.train;
        positive("train.learning_rate", t.learning_rate)?;
        nonzero("train.epochs", t.epochs)?;
        nonzero("train.batch_size", t.batch_size)?;
        if !(t.weight_decay >= 0.0 && t.weight_decay.is_finite()) {
            return Err(invalid("train.weight_decay", format!("must be finite and >= 0, got {}", t.weight_decay)));
        }
        positive("train.grad_clip_norm", t.grad_clip_norm)?;

        let a = &self.ate;
        nonzero("ate.k", a.k)?;
        if a.latent_factor < 2 || 32 % a.latent_factor != 0 {
            return Err(invalid("ate.latent_factor", format!("must be >= 2 and divide d_f = 32, got {}", a.latent_factor)));
        }
        nonzero("ate.hidden", a.hidden)?;
        nonzero("ate.ae_epochs", a.ae_epochs)?;
        nonzero("ate.ae_batch_size", a.ae_batch_size)?;
        positive("ate.ae_learning_rate", a.ae_learning_rate)?;
        nonzero("ate.head_epochs", a.head_epochs)?;
        positive("ate.head_learning_rate", a.head_learning_rate)?;

        let e = &self.te;
        if !(e.alpha >= 0.0 && e.alpha.is_finite()) {
            return Err(invalid("te.alpha", format!("must be finite and >= 0, got {}", e.alpha)));
        }
        positive("te.eps", e.eps)?;
        if e.factor < 2 || 32 % e.factor != 0 {
            return Err(invalid("te.factor", format!("must be >= 2 and divide d_f = 32, got {}", e.factor)));
        }
        nonzero("te.epochs", e.epochs)?;
        positive("te.learning_rate", e.learning_rate)?;
        nonzero("te.batch_size", e.batch_size)?;

        let u = &self.audit;
        nonzero("audit.lambda_groups", u.lambda_groups)?;
        if u.lambda_groups > self.bias_spec.num_groups() {
            return Err(invalid(
                "audit.lambda_groups",
                format!("cannot exceed the {} groups of the task", self.bias_spec.num_groups()),
            ));
        }
        if u.bootstrap_resamples < 1000 {
            return Err(invalid("audit.bootstrap_resamples", format!("must be >= 1000, got {}", u.bootstrap_resamples)));
        }
        nonzero("audit.probe_hidden", u.probe_hidden)?;
        nonzero("audit.probe_epochs", u.probe_epochs)?;
        positive("audit.probe_learning_rate", u.probe_learning_rate)?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// Dataset spec for one run seed.
    pub fn spec_for(&self, seed: u64) -> BiasSpec {
        BiasSpec { seed, ..self.bias_spec.clone() }
    }

    pub fn baseline_train(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: stage_seed(seed, Stage::Baseline),
            weight_decay: t.weight_decay,
            grad_clip_norm: t.grad_clip_norm,
        }
    }

    pub fn autoencoder(&self, seed: u64) -> AutoencoderConfig {
        let a = &self.ate;
        AutoencoderConfig {
            hidden: a.hidden,
            latent_factor: a.latent_factor,
            train: TrainConfig {
                learning_rate: a.ae_learning_rate,
                epochs: a.ae_epochs,
                batch_size: a.ae_batch_size,
                seed: stage_seed(seed, Stage::Autoencoder),
                weight_decay: self.train.weight_decay,
                grad_clip_norm: self.train.grad_clip_norm,
            },
        }
    }

    pub fn ate_head(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.ate.head_learning_rate,
            epochs: self.ate.head_epochs,
            seed: stage_seed(seed, Stage::AteHead),
            ..self.baseline_train(seed)
        }
    }

    pub fn te_d(&self, seed: u64) -> TeDConfig {
        let e = &self.te;
        TeDConfig {
            alpha: e.alpha,
            eps: e.eps,
            factor: e.factor,
            train: TrainConfig {
                learning_rate: e.learning_rate,
                epochs: e.epochs,
                batch_size: e.batch_size,
                seed: stage_seed(seed, Stage::TeD),
                ..self.baseline_train(seed)
            },
        }
    }

    pub fn probe(&self, seed: u64) -> ProbeConfig {
        let u = &self.audit;
        ProbeConfig {
            hidden: u.probe_hidden,
            train: TrainConfig {
                learning_rate: u.probe_learning_rate,
                epochs: u.probe_epochs,
                seed: stage_seed(seed, Stage::Probe),
                ..self.baseline_train(seed)
            },
        }
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
    ExperimentConfig::from_toml_str(&text)
}
