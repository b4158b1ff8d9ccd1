use crate::{te_d_loss_graph, LossComponents, Result, TeDError, TeDModel};
use baseline::BiasedModel;
use infomath::{rate_distortion, FeatureMatrix};
use metrics::split_accuracy;
use ndarray::Axis;
use netcore::{epoch_batches, seeded_rng, train_epoch, AdamW, NetError, TrainConfig};
use synthbias::{DatasetBundle, SplitArrays};

/// Offset mixed into the training seed for the confounder encoder's initialization.
const INIT_STREAM: u64 = 0x5EED_00DE;

#[derive(Debug, Clone, PartialEq)]
pub struct TeDConfig {
    pub alpha: f64,
    pub eps: f64,
    /// Bottleneck width is d_f / factor.
    pub factor: usize,
    pub train: TrainConfig,
}

impl Default for TeDConfig {
    fn default() -> Self {
        TeDConfig { alpha: 0.1, eps: 0.5, factor: 4, train: TrainConfig { epochs: 5, ..TrainConfig::default() } }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedTeD {
    pub model: TeDModel,
    /// Size-weighted mean of each loss component per epoch.
    pub epoch_log: Vec<LossComponents>,
    pub id_accuracy: f64,
    pub ood_accuracy: f64,
    pub conf_ood_accuracy: f64,
    /// Mean rate-distortion of `Z_c` and `Z_θ` over consecutive train batches after training.
    pub final_rate_conf: f64,
    pub final_rate_theta: f64,
}

/// Jointly fine-tunes a TE-D model initialized from `base`.
pub fn train_te_d(base: &BiasedModel, bundle: &DatasetBundle, cfg: &TeDConfig) -> Result<TrainedTeD> {
    cfg.train.validate()?;
    let mut model = TeDModel::from_baseline(base, cfg.factor, cfg.alpha, cfg.eps, cfg.train.seed ^ INIT_STREAM)?;
    let train = SplitArrays::from_samples(&bundle.train);
    let mut rng = seeded_rng(cfg.train.seed);
    let mut opt = AdamW::from_config(&cfg.train);
    let mut epoch_log = Vec::with_capacity(cfg.train.epochs);
    for _ in 0..cfg.train.epochs {
        let batches = epoch_batches(train.len(), cfg.train.batch_size, &mut rng);
        let mut sums = [0.0; 5];
        train_epoch(&mut model, &mut opt, &batches, &cfg.train, |g, m, idx| {
            let q = train.q.select(Axis(0), idx);
            let v = train.v.select(Axis(0), idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let nodes = te_d_loss_graph(g, m, &q, &v, &y, None).map_err(|e| match e {
                TeDError::Net(n) => n,
                other => NetError::Diverged { batch: 0, detail: other.to_string() },
            })?;
            for (s, x) in sums.iter_mut().zip(nodes.components(g).values()) {
                *s += x * idx.len() as f64;
            }
            Ok((nodes.total, nodes.leaves))
        })?;
        let n = train.len() as f64;
        epoch_log.push(LossComponents {
            l_con: sums[0] / n,
            l_ce: sums[1] / n,
            l_ce_conf: sums[2] / n,
            r: sums[3] / n,
            total: sums[4] / n,
        });
    }

    let (final_rate_conf, final_rate_theta) = batch_rates(&model, &train, cfg.train.batch_size)?;
    let id = SplitArrays::from_samples(&bundle.id_test);
    let ood = SplitArrays::from_samples(&bundle.ood_test);
    Ok(TrainedTeD {
        id_accuracy: split_accuracy(&model, &id)?,
        ood_accuracy: split_accuracy(&model, &ood)?,
        conf_ood_accuracy: split_accuracy(&crate::ConfHead(&model), &ood)?,
        final_rate_conf,
        final_rate_theta,
        model,
        epoch_log,
    })
}

/// Mean rate-distortion of `Z_c` and of `Z_θ` over consecutive batches of `split`.
pub fn batch_rates(model: &TeDModel, split: &SplitArrays, batch_size: usize) -> Result<(f64, f64)> {
    let f = model.features(&split.q, &split.v)?;
    let (mut rc, mut rt, mut count) = (0.0, 0.0, 0usize);
    let n = split.len();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let zc = f.z_c.slice(ndarray::s![start..end, ..]).to_owned();
        let zt = f.z_theta.slice(ndarray::s![start..end, ..]).to_owned();
        rc += rate_distortion(&FeatureMatrix::new(zc)?, model.eps)?;
        rt += rate_distortion(&FeatureMatrix::new(zt)?, model.eps)?;
        count += 1;
        start = end;
    }
    Ok((rc / count as f64, rt / count as f64))
}
