//! Minimal differentiable-network substrate: a reverse-mode tape over `f64`
//! matrices, dense networks, softmax cross-entropy, AdamW training and a
//! finite-difference gradient validator.

pub mod error;
pub mod exact;
pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod mlp;
pub mod module;
pub mod optim;

pub use error::{NetError, Result};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Grads, Graph, NodeId};
pub use mlp::{Activation, BoundMlp, Layer, Mlp};
pub use module::{Module, Tensors};
pub use optim::{epoch_batches, fit, train_epoch, AdamW, LossOutput, TrainConfig};

/// Dense row-major `f64` matrix used throughout.
pub type Mat = ndarray::Array2<f64>;

/// Seeded generator used for every random draw in the workspace.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Deterministic generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Mean softmax cross-entropy of `logits` against `labels`, evaluated without a graph.
pub fn cross_entropy_value(logits: &Mat, labels: &[usize]) -> Result<f64> {
    let mut g = Graph::new();
    let l = g.constant(logits.clone());
    let ce = g.softmax_cross_entropy(l, labels)?;
    Ok(g.scalar(ce))
}

/// Formats `x` with 17 significant digits, which round-trips every finite `f64` exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
