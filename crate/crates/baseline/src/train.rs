use crate::{BiasedModel, ModelDims, Result};
use metrics::split_accuracy;
use ndarray::Axis;
use netcore::{fit, TrainConfig};
use synthbias::{DatasetBundle, SplitArrays};

/// Offset mixed into the training seed for parameter initialization, so the
/// init stream differs from the shuffling stream.
const INIT_STREAM: u64 = 0x5EED_0001;

/// A trained baseline and the accuracies recorded right after training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBaseline {
    pub model: BiasedModel,
    /// Mean cross-entropy per epoch.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub id_accuracy: f64,
    pub ood_accuracy: f64,
}

/// Trains a freshly initialized model on `bundle.train` with cross-entropy only.
pub fn train_biased(bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<TrainedBaseline> {
    bundle.spec.validate().map_err(|e| crate::BaselineError::InvalidInput(e.to_string()))?;
    let dims = ModelDims::for_spec(&bundle.spec);
    let mut model = BiasedModel::new(dims, cfg.seed ^ INIT_STREAM)?;
    let train = SplitArrays::from_samples(&bundle.train);
    let epoch_losses = fit(&mut model, train.len(), cfg, |g, m, idx| {
        let q = g.constant(train.q.select(Axis(0), idx));
        let v = g.constant(train.v.select(Axis(0), idx));
        let (logits, leaves) = m.forward_graph(g, q, v).map_err(to_net)?;
        let y: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
        Ok((g.softmax_cross_entropy(logits, &y)?, leaves))
    })?;
    let id = SplitArrays::from_samples(&bundle.id_test);
    let ood = SplitArrays::from_samples(&bundle.ood_test);
    Ok(TrainedBaseline {
        train_accuracy: split_accuracy(&model, &train)?,
        id_accuracy: split_accuracy(&model, &id)?,
        ood_accuracy: split_accuracy(&model, &ood)?,
        model,
        epoch_losses,
    })
}

fn to_net(e: crate::BaselineError) -> netcore::NetError {
    match e {
        crate::BaselineError::Net(n) => n,
        other => netcore::NetError::InvalidInput(other.to_string()),
    }
}
