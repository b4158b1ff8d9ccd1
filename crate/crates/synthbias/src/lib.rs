//! Synthetic biased two-modality classification task.
//!
//! A sample has a "question" vector `q = [prefix ‖ q_core ‖ q_spur]` and a
//! "vision" vector `v = [v_core ‖ v_spur ‖ irrelevant ‖ cross_v]`, each block
//! `block_dim` wide. The label is `(a_q + a_v) mod k`, where the core
//! attributes `a_q` and `a_v` are readable only from the two core blocks, so
//! predicting it requires fusing both modalities.
//!
//! Each prefix group `g` has a bias class `g mod num_bias_classes`. On the
//! train and ID splits the label equals the bias class with probability
//! `rho_q`. The spurious blocks encode the label with their own `rho`, and
//! otherwise encode the bias class. All channels share one uniform draw, so
//! they agree with each other as often as possible. The OOD split draws labels
//! independently of the group, and every spurious block encodes the bias
//! class. This makes label agreement exactly `1/k`.
//!
//! The cross-modal channel is split across the second half of `q_spur` and
//! `cross_v`. A Gaussian pad is added to one half and subtracted from the
//! other, so only their sum carries the class prototype cleanly.

mod generate;
mod io;

pub use generate::{make_counterfactual, make_dataset, mask_to_spurious, prototypes, Prototypes};
pub use io::{read_split, write_split, FORMAT_VERSION};

use ndarray::Array2;
use netcore::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt dataset file {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("unsupported dataset format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// How spurious channels behave on the OOD split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OodMode {
    /// Channels carry the group's bias class, independent of the label.
    #[default]
    Agnostic,
    /// Channels never carry the label.
    Anti,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasSpec {
    pub num_classes: usize,
    pub block_dim: usize,
    pub rho_q: f64,
    pub rho_v: f64,
    pub rho_cross: f64,
    pub noise_sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Number of distinct bias classes; group `g` is biased toward `g mod num_bias_classes`.
    pub num_bias_classes: usize,
    /// Amplitude of the core-attribute prototypes.
    pub core_amp: f64,
    /// Amplitude of the prefix prototypes. Large enough that the group is
    /// decodable almost without error.
    pub prefix_amp: f64,
    /// Amplitude of the spurious prototypes.
    pub spur_amp: f64,
    /// Standard deviation of the pad that hides the cross-modal class in each half.
    pub pad_sigma: f64,
    /// Mean of the resampled irrelevant block on the counterfactual split.
    pub mu_shift: f64,
    pub ood_mode: OodMode,
}

impl Default for BiasSpec {
    fn default() -> Self {
        BiasSpec {
            num_classes: 8,
            block_dim: 16,
            rho_q: 0.9,
            rho_v: 0.9,
            rho_cross: 0.9,
            noise_sigma: 0.3,
            n_train: 8000,
            n_test: 2000,
            seed: 0,
            num_bias_classes: 4,
            core_amp: 2.0,
            prefix_amp: 2.0,
            spur_amp: 1.0,
            pad_sigma: 1.0,
            mu_shift: 1.0,
            ood_mode: OodMode::Agnostic,
        }
    }
}

impl BiasSpec {
    /// Spec with every spurious rate set to `1/k` (no bias).
    pub fn unbiased(&self) -> Self {
        let r = 1.0 / self.num_classes as f64;
        BiasSpec { rho_q: r, rho_v: r, rho_cross: r, ..self.clone() }
    }

    pub fn q_dim(&self) -> usize {
        3 * self.block_dim
    }

    pub fn v_dim(&self) -> usize {
        4 * self.block_dim
    }

    pub fn num_groups(&self) -> usize {
        self.num_classes
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(SynthError::InvalidSpec { field, reason });
        let k = self.num_classes;
        if k < 2 {
            return bad("num_classes", format!("must be >= 2, got {k}"));
        }
        if self.block_dim < 2 || self.block_dim % 2 != 0 {
            return bad("block_dim", format!("must be even and >= 2, got {}", self.block_dim));
        }
        let lo = 1.0 / k as f64;
        for (field, r) in [("rho_q", self.rho_q), ("rho_v", self.rho_v), ("rho_cross", self.rho_cross)] {
            // Tolerate the rounding of 1/k written out in decimal.
            if !(r >= lo - 1e-12 && r <= 1.0) {
                return bad(field, format!("must lie in [1/k, 1] = [{lo}, 1], got {r}"));
            }
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", format!("must be positive, got {}", self.noise_sigma));
        }
        if self.n_train < k {
            return bad("n_train", format!("must be >= num_classes ({k}), got {}", self.n_train));
        }
        if self.n_test < k {
            return bad("n_test", format!("must be >= num_classes ({k}), got {}", self.n_test));
        }
        if self.num_bias_classes < 1 || self.num_bias_classes > k {
            return bad("num_bias_classes", format!("must lie in [1, {k}], got {}", self.num_bias_classes));
        }
        for (field, v) in [("core_amp", self.core_amp), ("prefix_amp", self.prefix_amp), ("spur_amp", self.spur_amp), ("pad_sigma", self.pad_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(field, format!("must be finite and >= 0, got {v}"));
            }
        }
        if !self.mu_shift.is_finite() || self.mu_shift == 0.0 {
            return bad("mu_shift", format!("must be finite and nonzero, got {}", self.mu_shift));
        }
        Ok(())
    }
}

/// One example. Block layout is documented at the crate root.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub label: usize,
    pub group_id: usize,
    /// Latent core attributes; `label == (core_q + core_v) % k`.
    pub core_q: usize,
    pub core_v: usize,
    /// Classes encoded by the q-spurious, v-spurious and cross-modal channels.
    pub spur: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Prefix,
    QCore,
    QSpur,
    VCore,
    VSpur,
    Irrelevant,
    CrossV,
}

impl Block {
    /// (in q?, offset in blocks).
    fn position(self) -> (bool, usize) {
        match self {
            Block::Prefix => (true, 0),
            Block::QCore => (true, 1),
            Block::QSpur => (true, 2),
            Block::VCore => (false, 0),
            Block::VSpur => (false, 1),
            Block::Irrelevant => (false, 2),
            Block::CrossV => (false, 3),
        }
    }
}

impl Sample {
    pub fn block(&self, block: Block, block_dim: usize) -> &[f64] {
        let (in_q, i) = block.position();
        let src = if in_q { &self.q } else { &self.v };
        &src[i * block_dim..(i + 1) * block_dim]
    }

    pub fn block_mut(&mut self, block: Block, block_dim: usize) -> &mut [f64] {
        let (in_q, i) = block.position();
        let src = if in_q { &mut self.q } else { &mut self.v };
        &mut src[i * block_dim..(i + 1) * block_dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub spec: BiasSpec,
    pub train: Vec<Sample>,
    pub id_test: Vec<Sample>,
    pub ood_test: Vec<Sample>,
    pub cf_test: Vec<Sample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    IdTest,
    OodTest,
    CfTest,
}

impl SplitName {
    pub const ALL: [SplitName; 4] = [SplitName::Train, SplitName::IdTest, SplitName::OodTest, SplitName::CfTest];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::IdTest => "id_test",
            SplitName::OodTest => "ood_test",
            SplitName::CfTest => "cf_test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s)
    }
}

impl DatasetBundle {
    pub fn split(&self, name: SplitName) -> &[Sample] {
        match name {
            SplitName::Train => &self.train,
            SplitName::IdTest => &self.id_test,
            SplitName::OodTest => &self.ood_test,
            SplitName::CfTest => &self.cf_test,
        }
    }
}

/// Dense views of a split used by the models.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitArrays {
    pub q: Mat,
    pub v: Mat,
    pub labels: Vec<usize>,
    pub groups: Vec<usize>,
}

impl SplitArrays {
    pub fn from_samples(samples: &[Sample]) -> Self {
        let n = samples.len();
        let qd = samples.first().map_or(0, |s| s.q.len());
        let vd = samples.first().map_or(0, |s| s.v.len());
        let q = Array2::from_shape_fn((n, qd), |(i, j)| samples[i].q[j]);
        let v = Array2::from_shape_fn((n, vd), |(i, j)| samples[i].v[j]);
        SplitArrays {
            q,
            v,
            labels: samples.iter().map(|s| s.label).collect(),
            groups: samples.iter().map(|s| s.group_id).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows selected by `idx`.
    pub fn select(&self, idx: &[usize]) -> SplitArrays {
        SplitArrays {
            q: self.q.select(ndarray::Axis(0), idx),
            v: self.v.select(ndarray::Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
        }
    }
}
