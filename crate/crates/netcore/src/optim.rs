//! AdamW with decoupled weight decay, global norm clipping and the minibatch loop.

use crate::error::{NetError, Result};
use crate::graph::{Graph, NodeId};
use crate::module::Module;
use crate::Mat;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 64,
            seed: 0,
            weight_decay: 0.01,
            grad_clip_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::InvalidInput(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs < 1 {
            return Err(NetError::InvalidInput("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(NetError::InvalidInput("batch_size must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(NetError::InvalidInput(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(NetError::InvalidInput(format!("grad_clip_norm must be > 0, got {}", self.grad_clip_norm)));
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay (parameters shrink by `lr·wd` before the Adam step).
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamW { lr: learning_rate, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.learning_rate, cfg.weight_decay)
    }

    pub fn step(&mut self, params: Vec<&mut Mat>, grads: &[Mat]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Mat::zeros(g.raw_dim())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let decay = 1.0 - self.lr * self.weight_decay;
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *p *= decay;
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
            });
        }
    }
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Mat], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / (norm + 1e-6);
        for g in grads.iter_mut() {
            *g *= s;
        }
    }
    norm
}

/// Shuffled minibatches of `0..n`.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

/// Loss closure: builds the loss for one batch and returns the loss node together with the
/// leaf nodes of the module's tensors, in [`Module::tensors`] order.
pub type LossOutput = (NodeId, Vec<NodeId>);

/// One pass of minibatch AdamW updates. Returns the size-weighted mean batch loss.
pub fn train_epoch<M, F>(
    model: &mut M,
    opt: &mut AdamW,
    batches: &[Vec<usize>],
    cfg: &TrainConfig,
    mut loss_fn: F,
) -> Result<f64>
where
    M: Module,
    F: FnMut(&mut Graph, &M, &[usize]) -> Result<LossOutput>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for (bi, batch) in batches.iter().enumerate() {
        let mut g = Graph::new();
        let (loss, leaves) = loss_fn(&mut g, model, batch)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(NetError::Diverged { batch: bi, detail: format!("loss is {value}") });
        }
        let grads = g.backward(loss);
        let mut gs: Vec<Mat> = leaves.iter().map(|&id| grads.get(id)).collect();
        if gs.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(NetError::Diverged { batch: bi, detail: "non-finite gradient".into() });
        }
        clip_global_norm(&mut gs, cfg.grad_clip_norm);
        opt.step(model.tensors_mut(), &gs);
        total += value * batch.len() as f64;
        count += batch.len();
    }
    Ok(total / count.max(1) as f64)
}

/// Runs `cfg.epochs` epochs over `n` samples with seeded shuffling. Returns per-epoch mean losses.
pub fn fit<M, F>(model: &mut M, n: usize, cfg: &TrainConfig, mut loss_fn: F) -> Result<Vec<f64>>
where
    M: Module,
    F: FnMut(&mut Graph, &M, &[usize]) -> Result<LossOutput>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::from_config(cfg);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let batches = epoch_batches(n, cfg.batch_size, &mut rng);
        losses.push(train_epoch(model, &mut opt, &batches, cfg, &mut loss_fn)?);
    }
    Ok(losses)
}
