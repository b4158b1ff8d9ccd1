use crate::{accuracy, argmax_rows, prediction_entropy, MetricsError, Result};
use netcore::{fit, seeded_rng, Activation, Mat, Mlp, TrainConfig};

/// Probe architecture and training schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub train: TrainConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden: 32,
            train: TrainConfig { learning_rate: 1e-2, epochs: 20, batch_size: 64, ..TrainConfig::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub accuracy: f64,
    /// Entropy (nats) of the probe's aggregate predicted-label distribution on the evaluation rows.
    pub prediction_entropy: f64,
}

fn check(x: &Mat, y: &[usize], k: usize, what: &str) -> Result<()> {
    if x.nrows() != y.len() || x.nrows() == 0 {
        return Err(MetricsError::InvalidInput(format!("probe {what}: {} rows for {} labels", x.nrows(), y.len())));
    }
    if let Some(&l) = y.iter().find(|&&l| l >= k) {
        return Err(MetricsError::InvalidInput(format!("probe {what}: label {l} out of range for k = {k}")));
    }
    Ok(())
}

/// Trains a one-hidden-layer tanh probe on `(train_x, train_y)` and reports
/// its accuracy and prediction entropy on `(eval_x, eval_y)`.
pub fn probe_confounders(
    train_x: &Mat,
    train_y: &[usize],
    eval_x: &Mat,
    eval_y: &[usize],
    k: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    check(train_x, train_y, k, "train")?;
    check(eval_x, eval_y, k, "eval")?;
    if train_x.ncols() != eval_x.ncols() {
        return Err(MetricsError::InvalidInput("probe: train and eval feature widths differ".into()));
    }
    let mut rng = seeded_rng(cfg.train.seed);
    let mut probe = Mlp::new(&[train_x.ncols(), cfg.hidden, k], &[Activation::Tanh, Activation::Identity], &mut rng)?;
    fit(&mut probe, train_x.nrows(), &cfg.train, |g, m, idx| {
        let b = m.bind(g);
        let x = g.constant(train_x.select(ndarray::Axis(0), idx));
        let logits = b.forward(g, x)?;
        let y: Vec<usize> = idx.iter().map(|&i| train_y[i]).collect();
        let loss = g.softmax_cross_entropy(logits, &y)?;
        Ok((loss, b.param_nodes()))
    })?;
    let preds = argmax_rows(&probe.apply(eval_x)?);
    Ok(ProbeResult { accuracy: accuracy(&preds, eval_y)?, prediction_entropy: prediction_entropy(&preds, k)? })
}

/// Probe on one feature set, holding out the last `holdout` fraction of rows for evaluation.
pub fn probe_holdout(features: &Mat, labels: &[usize], k: usize, holdout: f64, cfg: &ProbeConfig) -> Result<ProbeResult> {
    check(features, labels, k, "input")?;
    let n = features.nrows();
    if n < 2 {
        return Err(MetricsError::InvalidInput("probe: need at least 2 rows to hold out".into()));
    }
    if !(holdout > 0.0 && holdout < 1.0) {
        return Err(MetricsError::InvalidInput(format!("probe: holdout must lie in (0, 1), got {holdout}")));
    }
    let cut = n - ((n as f64 * holdout).round() as usize).clamp(1, n - 1);
    let train: Vec<usize> = (0..cut).collect();
    let eval: Vec<usize> = (cut..n).collect();
    probe_confounders(
        &features.select(ndarray::Axis(0), &train),
        &labels[..cut],
        &features.select(ndarray::Axis(0), &eval),
        &labels[cut..],
        k,
        cfg,
    )
}
