//! Versioned text checkpoints.
//!
//! ```text
//! format_version 1
//! kind <baseline|ate_d|te_d>
//! config_lines <N>
//! <N lines: TOML snapshot of the experiment config>
//! metrics <M>
//! <name> <value>                 M lines
//! meta <P>
//! <key> <value>                  P lines; values contain no newline
//! tensors <T>
//! tensor <name> <rows> <cols>    then one line of `cols` floats per row
//! ```
//!
//! Floats use 17 significant digits, so save → load → save reproduces the
//! file byte for byte and every tensor bit for bit.

use crate::{HarnessError, Result};
use ate_d::{AteModel, Autoencoder, ConfounderDictionary, Weighting};
use baseline::{Backbone, BiasedModel};
use netcore::{fmt_f64, Activation, Layer, Mat, Mlp};
use std::fmt::Write as _;
use std::path::Path;
use te_d::TeDModel;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Baseline,
    AteD,
    TeD,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::AteD => "ate_d",
            ModelKind::TeD => "te_d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [ModelKind::Baseline, ModelKind::AteD, ModelKind::TeD].into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub kind: ModelKind,
    /// TOML snapshot of the experiment config that produced the model.
    pub config: String,
    /// Metrics recorded when the checkpoint was made.
    pub metrics: Vec<(String, f64)>,
    /// String-valued metadata (activations, weighting, scalar hyperparameters).
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Mat)>,
}

impl ModelCheckpoint {
    fn new(kind: ModelKind, config: &str, metrics: Vec<(String, f64)>) -> Self {
        ModelCheckpoint { kind, config: config.to_string(), metrics, meta: Vec::new(), tensors: Vec::new() }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn meta_value(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| corrupt_model(format!("missing meta entry '{key}'")))
    }

    fn tensor(&self, name: &str) -> Option<&Mat> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn push_mlp(&mut self, prefix: &str, mlp: &Mlp) {
        for (i, l) in mlp.layers.iter().enumerate() {
            self.tensors.push((format!("{prefix}.layer{i}.w"), l.w.clone()));
            self.tensors.push((format!("{prefix}.layer{i}.b"), l.b.clone()));
            self.meta.push((format!("act.{prefix}.layer{i}"), l.act.name().to_string()));
        }
    }

    fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let mut layers = Vec::new();
        while let Some(w) = self.tensor(&format!("{prefix}.layer{}.w", layers.len())) {
            let i = layers.len();
            let b = self
                .tensor(&format!("{prefix}.layer{i}.b"))
                .ok_or_else(|| corrupt_model(format!("missing {prefix}.layer{i}.b")))?;
            let act = Activation::parse(self.meta_value(&format!("act.{prefix}.layer{i}"))?)
                .map_err(|e| corrupt_model(e.to_string()))?;
            layers.push(Layer { w: w.clone(), b: b.clone(), act });
        }
        if layers.is_empty() {
            return Err(corrupt_model(format!("no layers for '{prefix}'")));
        }
        Mlp::from_layers(layers).map_err(|e| corrupt_model(format!("{prefix}: {e}")))
    }

    fn push_backbone(&mut self, bb: &Backbone) {
        self.push_mlp("enc_q", &bb.enc_q);
        self.push_mlp("enc_v", &bb.enc_v);
        self.push_mlp("fusion", &bb.fusion);
    }

    fn backbone(&self) -> Result<Backbone> {
        let bb = Backbone { enc_q: self.mlp("enc_q")?, enc_v: self.mlp("enc_v")?, fusion: self.mlp("fusion")? };
        bb.validate().map_err(|e| corrupt_model(e.to_string()))?;
        Ok(bb)
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(corrupt_model(format!("expected a {} checkpoint, found {}", kind.as_str(), self.kind.as_str())));
        }
        Ok(())
    }

    pub fn from_baseline(model: &BiasedModel, config: &str, metrics: Vec<(String, f64)>) -> Self {
        let mut c = Self::new(ModelKind::Baseline, config, metrics);
        c.push_backbone(&model.backbone);
        c.push_mlp("head", &model.head);
        c
    }

    pub fn to_baseline(&self) -> Result<BiasedModel> {
        self.expect_kind(ModelKind::Baseline)?;
        Ok(BiasedModel { backbone: self.backbone()?, head: self.mlp("head")? })
    }

    pub fn from_ate(model: &AteModel, config: &str, metrics: Vec<(String, f64)>) -> Self {
        let mut c = Self::new(ModelKind::AteD, config, metrics);
        c.push_backbone(&model.backbone);
        c.push_mlp("ae.enc", &model.ae.enc);
        c.push_mlp("ae.dec", &model.ae.dec);
        c.tensors.push(("dict.centroids".into(), model.dict.centroids().clone()));
        c.push_mlp("head", &model.head);
        c.meta.push(("weighting".into(), model.weighting.name().into()));
        c
    }

    pub fn to_ate(&self) -> Result<AteModel> {
        self.expect_kind(ModelKind::AteD)?;
        let ae = Autoencoder::from_parts(self.mlp("ae.enc")?, self.mlp("ae.dec")?).map_err(|e| corrupt_model(e.to_string()))?;
        let centroids = self.tensor("dict.centroids").ok_or_else(|| corrupt_model("missing dict.centroids".into()))?;
        let dict = ConfounderDictionary::new(centroids.clone()).map_err(|e| corrupt_model(e.to_string()))?;
        let w = self.meta_value("weighting")?;
        let weighting = Weighting::parse(w).ok_or_else(|| corrupt_model(format!("unknown weighting '{w}'")))?;
        Ok(AteModel { backbone: self.backbone()?, ae, dict, head: self.mlp("head")?, weighting })
    }

    pub fn from_ted(model: &TeDModel, config: &str, metrics: Vec<(String, f64)>) -> Self {
        let mut c = Self::new(ModelKind::TeD, config, metrics);
        c.push_backbone(&model.backbone);
        c.push_mlp("conf_enc", &model.conf_enc);
        c.push_mlp("conf_head", &model.conf_head);
        c.push_mlp("main_head", &model.main_head);
        c.meta.push(("alpha".into(), fmt_f64(model.alpha)));
        c.meta.push(("eps".into(), fmt_f64(model.eps)));
        c
    }

    pub fn to_ted(&self) -> Result<TeDModel> {
        self.expect_kind(ModelKind::TeD)?;
        let scalar = |k: &str| -> Result<f64> {
            let v = self.meta_value(k)?;
            v.parse().map_err(|_| corrupt_model(format!("bad {k} '{v}'")))
        };
        Ok(TeDModel {
            backbone: self.backbone()?,
            conf_enc: self.mlp("conf_enc")?,
            conf_head: self.mlp("conf_head")?,
            main_head: self.mlp("main_head")?,
            alpha: scalar("alpha")?,
            eps: scalar("eps")?,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format_version {CHECKPOINT_FORMAT_VERSION}");
        let _ = writeln!(s, "kind {}", self.kind.as_str());
        let config_lines: Vec<&str> = self.config.lines().collect();
        let _ = writeln!(s, "config_lines {}", config_lines.len());
        for l in &config_lines {
            let _ = writeln!(s, "{l}");
        }
        let _ = writeln!(s, "metrics {}", self.metrics.len());
        for (n, v) in &self.metrics {
            let _ = writeln!(s, "{n} {}", fmt_f64(*v));
        }
        let _ = writeln!(s, "meta {}", self.meta.len());
        for (k, v) in &self.meta {
            let _ = writeln!(s, "{k} {v}");
        }
        let _ = writeln!(s, "tensors {}", self.tensors.len());
        for (n, t) in &self.tensors {
            let _ = writeln!(s, "tensor {n} {} {}", t.nrows(), t.ncols());
            for row in t.rows() {
                let vals: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
                let _ = writeln!(s, "{}", vals.join(" "));
            }
        }
        s
    }

    pub fn from_text(text: &str, path: &str) -> Result<Self> {
        let corrupt = |reason: String| HarnessError::Corrupt { path: path.to_string(), reason };
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| corrupt(format!("truncated: missing {what}")));
        let keyed = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| corrupt(format!("expected '{key}', found '{line}'")))
        };
        let count = |line: &str, key: &str| -> Result<usize> {
            keyed(line, key)?.parse().map_err(|_| corrupt(format!("bad count in '{line}'")))
        };

        let version: u32 = keyed(next("format_version")?, "format_version")?
            .parse()
            .map_err(|_| corrupt("bad format_version".into()))?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(HarnessError::UnsupportedVersion {
                what: "checkpoint".into(),
                found: version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let kind_s = keyed(next("kind")?, "kind")?;
        let kind = ModelKind::parse(&kind_s).ok_or_else(|| corrupt(format!("unknown kind '{kind_s}'")))?;

        let n = count(next("config_lines")?, "config_lines")?;
        let mut config = String::new();
        for _ in 0..n {
            config.push_str(next("config line")?);
            config.push('\n');
        }

        let n = count(next("metrics")?, "metrics")?;
        let mut metrics = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next("metric")?;
            let (k, v) = line.split_once(' ').ok_or_else(|| corrupt(format!("malformed metric '{line}'")))?;
            let v: f64 = v.parse().map_err(|_| corrupt(format!("bad metric value '{v}'")))?;
            metrics.push((k.to_string(), v));
        }

        let n = count(next("meta")?, "meta")?;
        let mut meta = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next("meta entry")?;
            let (k, v) = line.split_once(' ').ok_or_else(|| corrupt(format!("malformed meta '{line}'")))?;
            meta.push((k.to_string(), v.to_string()));
        }

        let n = count(next("tensors")?, "tensors")?;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let header = next("tensor header")?;
            let parts: Vec<&str> = header.split(' ').collect();
            let [tag, name, r, c] = parts.as_slice() else {
                return Err(corrupt(format!("malformed tensor header '{header}'")));
            };
            if *tag != "tensor" {
                return Err(corrupt(format!("expected tensor header, found '{header}'")));
            }
            let rows: usize = r.parse().map_err(|_| corrupt(format!("bad rows in '{header}'")))?;
            let cols: usize = c.parse().map_err(|_| corrupt(format!("bad cols in '{header}'")))?;
            let mut m = Mat::zeros((rows, cols));
            for i in 0..rows {
                let line = next(&format!("row {i} of tensor {name}"))?;
                let vals: Vec<&str> = line.split(' ').collect();
                if vals.len() != cols {
                    return Err(corrupt(format!("tensor {name} row {i}: {} values, expected {cols}", vals.len())));
                }
                for (j, v) in vals.iter().enumerate() {
                    m[[i, j]] = v.parse().map_err(|_| corrupt(format!("tensor {name}: bad float '{v}'")))?;
                }
            }
            tensors.push((name.to_string(), m));
        }
        if lines.any(|l| !l.is_empty()) {
            return Err(corrupt("trailing data after last tensor".into()));
        }
        Ok(ModelCheckpoint { kind, config, metrics, meta, tensors })
    }
}

fn corrupt_model(reason: String) -> HarnessError {
    HarnessError::Corrupt { path: "<checkpoint>".into(), reason }
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    crate::write_file(path, &ckpt.to_text())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: p.clone(), source })?;
    ModelCheckpoint::from_text(&text, &p)
}
