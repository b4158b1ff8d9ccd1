//! The biased baseline: two modality encoders, a fusion stage that emits a
//! short sequence of fused vectors (the mediator), and a classifier head on
//! the mean of that sequence. Training uses plain cross-entropy, so the model
//! absorbs whatever shortcuts the training split offers.
//!
//! Fusion runs one shared network over four zero-masked views of the encoder
//! outputs `a = relu(enc_q(q))` and `b = relu(enc_v(v))`:
//! `[a, 0, 0]`, `[0, b, 0]`, `[0, 0, a∘b]` and `[a, b, a∘b]`. The first fusion
//! layer is applied blockwise, so the masked views cost one matrix product
//! per nonzero block.

mod backbone;
mod train;

pub use backbone::{pool, Backbone, BoundBackbone, NUM_VIEWS};
pub use train::{train_biased, TrainedBaseline};

use infomath::{Distribution, FeatureMatrix};
use metrics::Classifier;
use netcore::graph::softmax_rows;
use netcore::{seeded_rng, Activation, Graph, Mat, Mlp, Module, NetError, NodeId};
use synthbias::{BiasSpec, Sample, SplitArrays};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Net(NetError),
    #[error(transparent)]
    Info(#[from] infomath::InfoError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
}

impl From<NetError> for BaselineError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Diverged { batch, detail } => BaselineError::Diverged(format!("batch {batch}: {detail}")),
            other => BaselineError::Net(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// Layer widths of a [`BiasedModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub q_dim: usize,
    pub v_dim: usize,
    pub encoder_hidden: usize,
    pub fusion_hidden: usize,
    /// Width of each fused vector.
    pub d_f: usize,
    pub num_classes: usize,
}

impl ModelDims {
    /// Default widths for inputs shaped by `spec`.
    pub fn for_spec(spec: &BiasSpec) -> Self {
        ModelDims {
            q_dim: spec.q_dim(),
            v_dim: spec.v_dim(),
            encoder_hidden: 64,
            fusion_hidden: 128,
            d_f: 32,
            num_classes: spec.num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("q_dim", self.q_dim),
            ("v_dim", self.v_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("fusion_hidden", self.fusion_hidden),
            ("d_f", self.d_f),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(BaselineError::InvalidInput(format!("model width {name} must be positive")));
        }
        if self.num_classes < 2 {
            return Err(BaselineError::InvalidInput("num_classes must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasedModel {
    pub backbone: Backbone,
    /// Maps a pooled fused vector (d_f) to class logits.
    pub head: Mlp,
}

impl BiasedModel {
    /// Seeded random initialization.
    pub fn new(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = seeded_rng(seed);
        let backbone = Backbone::new(&dims, &mut rng)?;
        let head = Mlp::new(&[dims.d_f, dims.num_classes], &[Activation::Identity], &mut rng)?;
        Ok(BiasedModel { backbone, head })
    }

    pub fn num_classes(&self) -> usize {
        self.head.out_dim()
    }

    pub fn d_f(&self) -> usize {
        self.backbone.d_f()
    }

    /// Pooled features through the head.
    pub fn logits_from_pooled(&self, pooled: &Mat) -> Result<Mat> {
        Ok(self.head.apply(pooled)?)
    }

    /// The fused sequence of one sample as a `NUM_VIEWS × d_f` matrix, before pooling.
    pub fn extract_features(&self, sample: &Sample) -> Result<FeatureMatrix> {
        let arr = SplitArrays::from_samples(std::slice::from_ref(sample));
        let tokens = self.backbone.tokens(&arr.q, &arr.v)?;
        let d = self.d_f();
        let m = Mat::from_shape_fn((tokens.len(), d), |(t, j)| tokens[t][[0, j]]);
        Ok(FeatureMatrix::new(m)?)
    }

    /// Every fused vector of every sample, stacked (`n·NUM_VIEWS × d_f`, sample-major).
    pub fn stacked_features(&self, q: &Mat, v: &Mat) -> Result<Mat> {
        let tokens = self.backbone.tokens(q, v)?;
        Ok(stack_tokens(&tokens))
    }

    /// Softmax distribution over classes for one sample.
    pub fn predict(&self, sample: &Sample) -> Result<Distribution> {
        let arr = SplitArrays::from_samples(std::slice::from_ref(sample));
        let p = softmax_rows(&self.logits(&arr.q, &arr.v)?);
        Ok(Distribution::new(p.row(0).to_vec())?)
    }

    /// Softmax distributions for a batch of samples.
    pub fn predict_batch(&self, samples: &[Sample]) -> Result<Vec<Distribution>> {
        let arr = SplitArrays::from_samples(samples);
        let p = softmax_rows(&self.logits(&arr.q, &arr.v)?);
        Ok(p.rows().into_iter().map(|r| Distribution::new(r.to_vec())).collect::<infomath::Result<_>>()?)
    }

    pub fn logits(&self, q: &Mat, v: &Mat) -> Result<Mat> {
        self.logits_from_pooled(&self.backbone.pooled(q, v)?)
    }

    /// Logits on the tape with every tensor as a leaf. Returns `(logits, leaves)`
    /// with leaves in [`Module::tensors`] order.
    pub fn forward_graph(&self, g: &mut Graph, q: NodeId, v: NodeId) -> Result<(NodeId, Vec<NodeId>)> {
        let bb = self.backbone.bind(g);
        let head = self.head.bind(g);
        let pooled = bb.pooled(g, q, v)?;
        let logits = head.forward(g, pooled)?;
        let mut leaves = bb.param_nodes();
        leaves.extend(head.param_nodes());
        Ok((logits, leaves))
    }
}

/// Rows of `tokens[t]` interleaved sample-major: row `i·T + t` is token `t` of sample `i`.
pub fn stack_tokens(tokens: &[Mat]) -> Mat {
    let t = tokens.len();
    let n = tokens.first().map_or(0, |m| m.nrows());
    let d = tokens.first().map_or(0, |m| m.ncols());
    Mat::from_shape_fn((n * t, d), |(r, j)| tokens[r % t][[r / t, j]])
}

impl Module for BiasedModel {
    fn named_tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = self.backbone.named_tensors();
        out.extend(self.head.named_tensors().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = self.backbone.tensors_mut();
        out.extend(self.head.tensors_mut());
        out
    }
}

impl Classifier for BiasedModel {
    fn num_classes(&self) -> usize {
        self.head.out_dim()
    }

    fn logits(&self, q: &Mat, v: &Mat) -> metrics::Result<Mat> {
        BiasedModel::logits(self, q, v).map_err(|e| metrics::MetricsError::InvalidInput(e.to_string()))
    }
}
