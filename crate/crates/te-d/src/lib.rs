//! Debiasing by total effect.
//!
//! The pooled fused feature `z_θ` of a biased backbone feeds a low-rank
//! confounder branch `z_c = conf_enc(stop_gradient(z_θ))` whose own head is
//! trained to predict the label while the coding rate of `Z_c` is minimized.
//! The debiased feature is `z_te = z_θ − z_c`, and the prediction is
//! `main_head(z_te)`.
//!
//! Inside the debiasing losses `z_c` also enters through a stop-gradient, so
//! the confounder branch learns only from its own cross-entropy and the rate
//! term. The backbone and the main head learn from the main cross-entropy and
//! the contrastive term.
//!
//! `z_θ` and `z_c` are rounded onto a shared per-entry grid (see
//! [`netcore::exact`]) before the subtraction, so `z_te + z_c == z_θ` holds
//! bit for bit.

mod loss;
mod model;
mod train;

pub use loss::{
    contrastive_from_similarities, contrastive_loss, frozen_stops, te_d_loss, te_d_loss_graph, FrozenStops,
    LossComponents, LossNodes,
};
pub use model::{total_effect, ConfHead, TeDFeatures, TeDModel};
pub use train::{batch_rates, train_te_d, TeDConfig, TrainedTeD};

use netcore::NetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TeDError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Net(NetError),
    #[error(transparent)]
    Info(#[from] infomath::InfoError),
    #[error(transparent)]
    Baseline(#[from] baseline::BaselineError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
}

impl From<NetError> for TeDError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Diverged { batch, detail } => TeDError::Diverged(format!("batch {batch}: {detail}")),
            other => TeDError::Net(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, TeDError>;
