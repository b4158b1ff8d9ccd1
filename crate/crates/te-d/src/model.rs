use crate::{Result, TeDError};
use baseline::{Backbone, BiasedModel};
use metrics::Classifier;
use netcore::exact::align;
use netcore::{seeded_rng, Activation, Mat, Mlp, Module};

/// Backbone plus confounder branch and two heads.
#[derive(Debug, Clone, PartialEq)]
pub struct TeDModel {
    pub backbone: Backbone,
    /// d_f → d_f/factor → d_f, both layers linear.
    pub conf_enc: Mlp,
    pub conf_head: Mlp,
    pub main_head: Mlp,
    /// Weight of the rate-distortion term.
    pub alpha: f64,
    /// Distortion precision of the rate-distortion term.
    pub eps: f64,
}

/// The three features of a batch, with `z_te + z_c == z_theta` bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct TeDFeatures {
    pub z_theta: Mat,
    pub z_c: Mat,
    pub z_te: Mat,
}

/// Elementwise `z_theta − z_c`.
pub fn total_effect(z_theta: &Mat, z_c: &Mat) -> Result<Mat> {
    if z_theta.shape() != z_c.shape() {
        return Err(TeDError::InvalidInput(format!(
            "total effect of shapes {:?} and {:?}",
            z_theta.shape(),
            z_c.shape()
        )));
    }
    Ok(z_theta - z_c)
}

impl TeDModel {
    /// Copies the backbone of `base`. Both heads start as copies of the
    /// baseline head, and `conf_enc` is freshly initialized from `seed`.
    pub fn from_baseline(base: &BiasedModel, factor: usize, alpha: f64, eps: f64, seed: u64) -> Result<Self> {
        let d = base.d_f();
        if factor < 2 || d % factor != 0 {
            return Err(TeDError::InvalidInput(format!("bottleneck factor {factor} must be >= 2 and divide d_f = {d}")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(TeDError::InvalidInput(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(TeDError::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        let mut rng = seeded_rng(seed);
        let conf_enc = Mlp::new(&[d, d / factor, d], &[Activation::Identity, Activation::Identity], &mut rng)?;
        Ok(TeDModel {
            backbone: base.backbone.clone(),
            conf_enc,
            conf_head: base.head.clone(),
            main_head: base.head.clone(),
            alpha,
            eps,
        })
    }

    pub fn d_f(&self) -> usize {
        self.backbone.d_f()
    }

    pub fn bottleneck_width(&self) -> usize {
        self.conf_enc.layers[0].w.ncols()
    }

    /// Raw confounder feature `conf_enc(z_theta)`, before grid alignment.
    pub fn confounder_forward(&self, z_theta: &Mat) -> Result<Mat> {
        Ok(self.conf_enc.apply(z_theta)?)
    }

    /// Output of the first `conf_enc` layer (the low-dimensional confounder code).
    pub fn confounder_code(&self, z_theta: &Mat) -> Result<Mat> {
        let l = &self.conf_enc.layers[0];
        let mut h = z_theta.dot(&l.w) + &l.b;
        l.act.apply_inplace(&mut h);
        Ok(h)
    }

    pub fn features(&self, q: &Mat, v: &Mat) -> Result<TeDFeatures> {
        let raw = self.backbone.pooled(q, v)?;
        let zc_raw = self.confounder_forward(&raw)?;
        let (z_theta, z_c) = align(&raw, &zc_raw);
        let z_te = total_effect(&z_theta, &z_c)?;
        Ok(TeDFeatures { z_theta, z_c, z_te })
    }

    pub fn main_logits(&self, q: &Mat, v: &Mat) -> Result<Mat> {
        Ok(self.main_head.apply(&self.features(q, v)?.z_te)?)
    }

    pub fn conf_logits(&self, q: &Mat, v: &Mat) -> Result<Mat> {
        Ok(self.conf_head.apply(&self.features(q, v)?.z_c)?)
    }

    /// Parameters present here but not in the baseline (confounder encoder and head).
    pub fn added_param_count(&self) -> usize {
        self.conf_enc.param_count() + self.conf_head.param_count()
    }

    /// Parameters updated by fine-tuning (all of them).
    pub fn trainable_param_count(&self) -> usize {
        self.param_count()
    }
}

impl Module for TeDModel {
    fn named_tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = self.backbone.named_tensors();
        for (prefix, m) in [("conf_enc", &self.conf_enc), ("conf_head", &self.conf_head), ("main_head", &self.main_head)] {
            out.extend(m.named_tensors().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = self.backbone.tensors_mut();
        out.extend(self.conf_enc.tensors_mut());
        out.extend(self.conf_head.tensors_mut());
        out.extend(self.main_head.tensors_mut());
        out
    }
}

fn to_metrics(e: TeDError) -> metrics::MetricsError {
    metrics::MetricsError::InvalidInput(e.to_string())
}

/// The debiased prediction `main_head(z_te)`.
impl Classifier for TeDModel {
    fn num_classes(&self) -> usize {
        self.main_head.out_dim()
    }

    fn logits(&self, q: &Mat, v: &Mat) -> metrics::Result<Mat> {
        self.main_logits(q, v).map_err(to_metrics)
    }
}

/// The confounder prediction `conf_head(z_c)` of a [`TeDModel`].
#[derive(Debug, Clone, Copy)]
pub struct ConfHead<'a>(pub &'a TeDModel);

impl Classifier for ConfHead<'_> {
    fn num_classes(&self) -> usize {
        self.0.conf_head.out_dim()
    }

    fn logits(&self, q: &Mat, v: &Mat) -> metrics::Result<Mat> {
        self.0.conf_logits(q, v).map_err(to_metrics)
    }
}
