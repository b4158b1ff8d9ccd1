//! Debiasing by approximate backdoor adjustment.
//!
//! 1. A small autoencoder is fit to every fused vector the biased model
//!    produces on the training split. Its latent code is the substitute
//!    confounder.
//! 2. The latent codes are clustered into a dictionary of `K` centroids.
//! 3. Each fused vector `r` is reweighted by `w = 1 − mean_j cos(F_enc(r), c_j)`,
//!    so vectors that look like typical confounders shrink.
//! 4. The backbone and autoencoder stay frozen, and only the classifier head
//!    is fine-tuned on the pooled recalibrated features. Recalibration is
//!    applied at inference too.

mod autoencoder;
mod dictionary;
mod finetune;
mod io;

pub use autoencoder::{train_autoencoder, Autoencoder, AutoencoderConfig, AutoencoderReport};
pub use dictionary::{build_dictionary, kmeans, recalibrate, recalibration_weights, ConfounderDictionary, KMEANS_MAX_ITERS, KMEANS_TOL};
pub use finetune::{finetune_recalibrated, AteModel, TrainedAte, Weighting};
pub use io::{read_dictionary, write_dictionary, DICTIONARY_FORMAT_VERSION};

use netcore::NetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AteError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt dictionary file {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("unsupported dictionary format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Net(NetError),
    #[error(transparent)]
    Info(#[from] infomath::InfoError),
    #[error(transparent)]
    Baseline(#[from] baseline::BaselineError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
}

impl From<NetError> for AteError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Diverged { batch, detail } => AteError::Diverged(format!("batch {batch}: {detail}")),
            other => AteError::Net(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, AteError>;
