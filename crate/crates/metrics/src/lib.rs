//! Evaluation metrics for trained classifiers on the synthetic task.
//!
//! Models are seen only through [`Classifier`], which maps batches of
//! `(q, v)` rows to logits. Every metric here is a pure function of a frozen
//! model and a split.

mod bootstrap;
mod groups;
mod probe;

pub use bootstrap::{bootstrap_significance, BOOTSTRAP_CHUNK};
pub use groups::{groups_of, highest_bias_groups, modal_predictions, train_modal_labels, GroupSpec};
pub use probe::{probe_confounders, probe_holdout, ProbeConfig, ProbeResult};

use infomath::{entropy, kl_from_uniform, Distribution};
use netcore::graph::softmax_rows;
use netcore::{Mat, NetError};
use synthbias::{mask_to_spurious, Sample, SplitArrays};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate group {group_id}: total certainty {denominator:e} on full inputs is below 1e-12")]
    DegenerateGroup { group_id: usize, denominator: f64 },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Info(#[from] infomath::InfoError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Lower bound on the summed full-input certainty before λ is reported as degenerate.
pub const LAMBDA_DENOMINATOR_GUARD: f64 = 1e-12;

/// A frozen model that produces class logits for batches of inputs.
pub trait Classifier {
    fn num_classes(&self) -> usize;

    /// Logits (n × k) for the rows of `q` and `v`.
    fn logits(&self, q: &Mat, v: &Mat) -> Result<Mat>;

    /// Row-wise softmax of [`Classifier::logits`].
    fn probabilities(&self, q: &Mat, v: &Mat) -> Result<Mat> {
        Ok(softmax_rows(&self.logits(q, v)?))
    }

    /// Argmax class of each row; ties go to the lowest index.
    fn predict_labels(&self, q: &Mat, v: &Mat) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(q, v)?))
    }
}

pub fn argmax_rows(m: &Mat) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &x) in r.iter().enumerate() {
                if x > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(MetricsError::InvalidInput(format!(
            "accuracy: {} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(MetricsError::InvalidInput("accuracy: empty input".into()));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Per-sample correctness of `model` on `split`, as 0/1 values.
pub fn correctness<C: Classifier + ?Sized>(model: &C, split: &SplitArrays) -> Result<Vec<u8>> {
    let preds = model.predict_labels(&split.q, &split.v)?;
    Ok(preds.iter().zip(&split.labels).map(|(p, l)| u8::from(p == l)).collect())
}

pub fn split_accuracy<C: Classifier + ?Sized>(model: &C, split: &SplitArrays) -> Result<f64> {
    accuracy(&model.predict_labels(&split.q, &split.v)?, &split.labels)
}

fn rows_as_distributions(p: &Mat) -> Result<Vec<Distribution>> {
    p.rows().into_iter().map(|r| Ok(Distribution::new(r.to_vec())?)).collect()
}

/// λ from already-computed masked and full predictive distributions.
///
/// `log_base` selects the logarithm used inside each KL term; the ratio does
/// not depend on it.
pub fn lambda_from_distributions(
    group_id: usize,
    masked: &[Distribution],
    full: &[Distribution],
    log_base: Option<f64>,
) -> Result<f64> {
    if masked.len() != full.len() || masked.is_empty() {
        return Err(MetricsError::InvalidInput(format!(
            "lambda: {} masked vs {} full distributions",
            masked.len(),
            full.len()
        )));
    }
    let scale = log_base.map_or(1.0, f64::ln);
    let mut num = 0.0;
    let mut den = 0.0;
    for (m, f) in masked.iter().zip(full) {
        num += kl_from_uniform(m)? / scale;
        den += kl_from_uniform(f)? / scale;
    }
    if den < LAMBDA_DENOMINATOR_GUARD {
        return Err(MetricsError::DegenerateGroup { group_id, denominator: den });
    }
    Ok(num / den)
}

/// Sufficiency score of one group: certainty from the prefix alone over
/// certainty from the full input.
pub fn sufficiency_lambda<C: Classifier + ?Sized>(
    model: &C,
    group: &GroupSpec,
    split: &[Sample],
    block_dim: usize,
) -> Result<f64> {
    group.validate(split.len())?;
    let members: Vec<Sample> = group.sample_indices.iter().map(|&i| split[i].clone()).collect();
    let masked: Vec<Sample> = members.iter().map(|s| mask_to_spurious(s, block_dim)).collect();
    let full = SplitArrays::from_samples(&members);
    let masked = SplitArrays::from_samples(&masked);
    let pf = rows_as_distributions(&model.probabilities(&full.q, &full.v)?)?;
    let pm = rows_as_distributions(&model.probabilities(&masked.q, &masked.v)?)?;
    lambda_from_distributions(group.group_id, &pm, &pf, None)
}

/// Accuracy on `id` minus accuracy on its counterfactual copy `cf`.
pub fn necessity_delta<C: Classifier + ?Sized>(model: &C, id: &[Sample], cf: &[Sample]) -> Result<f64> {
    if id.len() != cf.len() || id.is_empty() {
        return Err(MetricsError::InvalidInput(format!(
            "necessity: split lengths {} and {}",
            id.len(),
            cf.len()
        )));
    }
    if let Some(i) = id.iter().zip(cf).position(|(a, b)| a.label != b.label || a.q != b.q) {
        return Err(MetricsError::InvalidInput(format!("necessity: splits misaligned at row {i}")));
    }
    let a = split_accuracy(model, &SplitArrays::from_samples(id))?;
    let b = split_accuracy(model, &SplitArrays::from_samples(cf))?;
    Ok(a - b)
}

/// Entropy (nats) of the empirical distribution of `preds` over `k` classes.
pub fn prediction_entropy(preds: &[usize], k: usize) -> Result<f64> {
    if preds.is_empty() {
        return Err(MetricsError::InvalidInput("prediction entropy: empty split".into()));
    }
    let mut counts = vec![0usize; k];
    for &p in preds {
        if p >= k {
            return Err(MetricsError::InvalidInput(format!("prediction {p} out of range for k = {k}")));
        }
        counts[p] += 1;
    }
    let n = preds.len() as f64;
    let dist = Distribution::new(counts.iter().map(|&c| c as f64 / n).collect())?;
    Ok(entropy(&dist)?)
}

pub fn model_prediction_entropy<C: Classifier + ?Sized>(model: &C, split: &SplitArrays) -> Result<f64> {
    prediction_entropy(&model.predict_labels(&split.q, &split.v)?, model.num_classes())
}
