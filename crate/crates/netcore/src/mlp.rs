//! Dense multilayer networks with per-layer activations.

use crate::error::{NetError, Result};
use crate::graph::{sigmoid, Graph, NodeId};
use crate::module::Module;
use crate::Mat;
use ndarray::Array2;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(NetError::InvalidInput(format!("unknown activation '{other}'"))),
        }
    }

    pub fn apply_graph(self, g: &mut Graph, x: NodeId) -> NodeId {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Identity => x,
        }
    }

    pub fn apply_inplace(self, x: &mut Mat) {
        match self {
            Activation::Relu => x.mapv_inplace(|a| a.max(0.0)),
            Activation::Tanh => x.mapv_inplace(f64::tanh),
            Activation::Sigmoid => x.mapv_inplace(sigmoid),
            Activation::Identity => {}
        }
    }
}

/// One affine layer `x W + b` followed by an activation. `W` is in×out, `b` is 1×out.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Mat,
    pub b: Mat,
    pub act: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// An [`Mlp`] whose tensors have been placed on a [`Graph`].
#[derive(Debug, Clone)]
pub struct BoundMlp {
    nodes: Vec<(NodeId, NodeId, Activation)>,
}

impl Mlp {
    /// Seeded uniform init in ±1/√fan_in for weights and biases.
    ///
    /// `dims` lists layer widths including input and output; `acts` has one entry per layer.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], acts: &[Activation], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || acts.len() != dims.len() - 1 {
            return Err(NetError::InvalidInput(format!(
                "mlp needs {} activations for dims {:?}",
                dims.len().saturating_sub(1),
                dims
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(NetError::InvalidInput(format!("zero-width layer in {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(w, &act)| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let weight = Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-bound..bound));
                let bias = Array2::from_shape_fn((1, w[1]), |_| rng.random_range(-bound..bound));
                Layer { w: weight, b: bias, act }
            })
            .collect();
        Ok(Mlp { layers })
    }

    /// Builds an MLP from explicit layers after checking that dimensions compose.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NetError::InvalidInput("mlp has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.b.nrows() != 1 || l.b.ncols() != l.w.ncols() {
                return Err(NetError::InvalidInput(format!("layer {i}: bias shape {:?}", l.b.shape())));
            }
            if i > 0 && layers[i - 1].w.ncols() != l.w.nrows() {
                return Err(NetError::InvalidInput(format!("layer {i}: input width mismatch")));
            }
            if l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()) {
                return Err(NetError::InvalidInput(format!("layer {i}: non-finite parameter")));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].w.ncols()
    }

    /// Forward pass without recording a graph. Bitwise equal to the graph forward pass.
    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        if x.ncols() != self.in_dim() {
            return Err(NetError::InvalidInput(format!(
                "mlp expects {} input columns, got {}",
                self.in_dim(),
                x.ncols()
            )));
        }
        let mut h = x.clone();
        for l in &self.layers {
            h = h.dot(&l.w) + &l.b;
            l.act.apply_inplace(&mut h);
        }
        Ok(h)
    }

    /// Places the tensors on `g` as differentiable leaves.
    pub fn bind(&self, g: &mut Graph) -> BoundMlp {
        let nodes = self
            .layers
            .iter()
            .map(|l| (g.leaf(l.w.clone()), g.leaf(l.b.clone()), l.act))
            .collect();
        BoundMlp { nodes }
    }

    /// Places the tensors on `g` as constants (frozen network).
    pub fn bind_frozen(&self, g: &mut Graph) -> BoundMlp {
        let nodes = self
            .layers
            .iter()
            .map(|l| (g.constant(l.w.clone()), g.constant(l.b.clone()), l.act))
            .collect();
        BoundMlp { nodes }
    }
}

impl BoundMlp {
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for &(w, b, act) in &self.nodes {
            let z = g.matmul(h, w)?;
            let z = g.add_bias(z, b)?;
            h = act.apply_graph(g, z);
        }
        Ok(h)
    }

    /// Tensor nodes in the same order as [`Module::tensors`].
    pub fn param_nodes(&self) -> Vec<NodeId> {
        self.nodes.iter().flat_map(|&(w, b, _)| [w, b]).collect()
    }

    /// Weight and bias nodes of layer `i`.
    pub fn layer(&self, i: usize) -> (NodeId, NodeId, Activation) {
        self.nodes[i]
    }
}

impl Module for Mlp {
    fn named_tensors(&self) -> Vec<(String, &Mat)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| [(format!("layer{i}.w"), &l.w), (format!("layer{i}.b"), &l.b)])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }
}
