use crate::{Autoencoder, ConfounderDictionary, Result};
use baseline::{pool, Backbone, BiasedModel};
use metrics::{split_accuracy, Classifier};
use ndarray::Axis;
use netcore::{fit, Mat, Mlp, Module, TrainConfig};
use synthbias::{DatasetBundle, SplitArrays};

/// How confounder similarity turns into a per-vector weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// `w = 1 − mean cos`: down-weights confounder-like vectors.
    Standard,
    /// `w' = 2 − w`: up-weights confounder-like vectors (ablation).
    Inverted,
    /// `w = 1`: plain head retraining on the unmodified features.
    Plain,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Standard => "standard",
            Weighting::Inverted => "inverted",
            Weighting::Plain => "plain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Weighting::Standard, Weighting::Inverted, Weighting::Plain].into_iter().find(|w| w.name() == s)
    }
}

/// Frozen backbone, autoencoder and dictionary with a fine-tuned head.
#[derive(Debug, Clone, PartialEq)]
pub struct AteModel {
    pub backbone: Backbone,
    pub ae: Autoencoder,
    pub dict: ConfounderDictionary,
    pub head: Mlp,
    pub weighting: Weighting,
}

impl AteModel {
    /// Weight of every fused vector, one vector of n weights per view.
    pub fn token_weights(&self, tokens: &[Mat]) -> Result<Vec<Vec<f64>>> {
        tokens
            .iter()
            .map(|t| {
                if self.weighting == Weighting::Plain {
                    return Ok(vec![1.0; t.nrows()]);
                }
                let w = crate::recalibration_weights(&self.ae.encode(t)?, &self.dict)?;
                Ok(match self.weighting {
                    Weighting::Inverted => w.into_iter().map(|x| 2.0 - x).collect(),
                    _ => w,
                })
            })
            .collect()
    }

    /// Mean over views of the reweighted fused vectors (n × d_f).
    pub fn pooled_recalibrated(&self, q: &Mat, v: &Mat) -> Result<Mat> {
        let tokens = self.backbone.tokens(q, v)?;
        if self.weighting == Weighting::Plain {
            return Ok(pool(&tokens));
        }
        let weights = self.token_weights(&tokens)?;
        let scaled: Vec<Mat> = tokens
            .into_iter()
            .zip(weights)
            .map(|(mut t, w)| {
                for (mut row, wi) in t.rows_mut().into_iter().zip(w) {
                    row *= wi;
                }
                t
            })
            .collect();
        Ok(pool(&scaled))
    }

    /// Mean over views of the autoencoder codes (n × latent_dim); the confounder features probed for bias.
    pub fn pooled_latents(&self, q: &Mat, v: &Mat) -> Result<Mat> {
        let tokens = self.backbone.tokens(q, v)?;
        let codes: Vec<Mat> = tokens.iter().map(|t| self.ae.encode(t)).collect::<Result<_>>()?;
        Ok(pool(&codes))
    }

    pub fn logits(&self, q: &Mat, v: &Mat) -> Result<Mat> {
        Ok(self.head.apply(&self.pooled_recalibrated(q, v)?)?)
    }

    /// Parameters updated by fine-tuning (the head only).
    pub fn trainable_param_count(&self) -> usize {
        self.head.param_count()
    }
}

impl Classifier for AteModel {
    fn num_classes(&self) -> usize {
        self.head.out_dim()
    }

    fn logits(&self, q: &Mat, v: &Mat) -> metrics::Result<Mat> {
        AteModel::logits(self, q, v).map_err(|e| metrics::MetricsError::InvalidInput(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAte {
    pub model: AteModel,
    pub epoch_losses: Vec<f64>,
    /// Ratio of mean pooled-feature norms, recalibrated over plain, on the train split.
    /// The copied head's weights are divided by it before fine-tuning.
    pub head_scale: f64,
    pub id_accuracy: f64,
    pub ood_accuracy: f64,
}

fn mean_row_norm(m: &Mat) -> f64 {
    m.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / m.nrows() as f64
}

/// Fine-tunes a copy of `base.head` on recalibrated pooled features of the
/// train split. The backbone, autoencoder and dictionary are not modified.
pub fn finetune_recalibrated(
    base: &BiasedModel,
    ae: &Autoencoder,
    dict: &ConfounderDictionary,
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    weighting: Weighting,
) -> Result<TrainedAte> {
    if ae.input_dim() != base.d_f() || ae.latent_dim() != dict.latent_dim() {
        return Err(crate::AteError::InvalidInput(format!(
            "widths disagree: d_f {}, autoencoder {}→{}, dictionary {}",
            base.d_f(),
            ae.input_dim(),
            ae.latent_dim(),
            dict.latent_dim()
        )));
    }
    let mut model = AteModel {
        backbone: base.backbone.clone(),
        ae: ae.clone(),
        dict: dict.clone(),
        head: base.head.clone(),
        weighting,
    };
    let train = SplitArrays::from_samples(&bundle.train);
    let features = model.pooled_recalibrated(&train.q, &train.v)?;
    let plain = base.backbone.pooled(&train.q, &train.v)?;
    let head_scale = mean_row_norm(&features) / mean_row_norm(&plain);
    if !(head_scale.is_finite() && head_scale > 0.0) {
        return Err(crate::AteError::InvalidInput(format!("degenerate recalibrated features (norm ratio {head_scale})")));
    }
    for layer in &mut model.head.layers[..1] {
        layer.w /= head_scale;
    }
    let mut head = model.head.clone();
    let epoch_losses = fit(&mut head, train.len(), cfg, |g, m, idx| {
        let b = m.bind(g);
        let x = g.constant(features.select(Axis(0), idx));
        let logits = b.forward(g, x)?;
        let y: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
        Ok((g.softmax_cross_entropy(logits, &y)?, b.param_nodes()))
    })?;
    model.head = head;
    let id = SplitArrays::from_samples(&bundle.id_test);
    let ood = SplitArrays::from_samples(&bundle.ood_test);
    Ok(TrainedAte {
        id_accuracy: split_accuracy(&model, &id)?,
        ood_accuracy: split_accuracy(&model, &ood)?,
        model,
        epoch_losses,
        head_scale,
    })
}
