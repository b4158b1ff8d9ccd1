use crate::{BaselineError, ModelDims, Result};
use netcore::{Activation, BoundMlp, Graph, Mat, Mlp, Module, NodeId, Rng};

/// Number of fused vectors emitted per sample.
pub const NUM_VIEWS: usize = 4;

/// Encoders and fusion network; everything in the model except the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub enc_q: Mlp,
    pub enc_v: Mlp,
    /// First layer takes `[a ‖ b ‖ a∘b]` (3·encoder_hidden wide); output is d_f.
    pub fusion: Mlp,
}

/// A [`Backbone`] placed on a [`Graph`].
#[derive(Debug, Clone)]
pub struct BoundBackbone {
    enc_q: BoundMlp,
    enc_v: BoundMlp,
    fusion: BoundMlp,
    fusion_layers: usize,
    hidden: usize,
}

impl Backbone {
    pub fn new(dims: &ModelDims, rng: &mut Rng) -> Result<Self> {
        let h = dims.encoder_hidden;
        let enc_q = Mlp::new(&[dims.q_dim, h], &[Activation::Relu], rng)?;
        let enc_v = Mlp::new(&[dims.v_dim, h], &[Activation::Relu], rng)?;
        let fusion = Mlp::new(&[3 * h, dims.fusion_hidden, dims.d_f], &[Activation::Relu, Activation::Tanh], rng)?;
        let bb = Backbone { enc_q, enc_v, fusion };
        bb.validate()?;
        Ok(bb)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.enc_q.out_dim();
        if self.enc_v.out_dim() != h || self.fusion.in_dim() != 3 * h {
            return Err(BaselineError::InvalidInput(format!(
                "fusion input {} does not match 3 x encoder width {h}",
                self.fusion.in_dim()
            )));
        }
        Ok(())
    }

    pub fn d_f(&self) -> usize {
        self.fusion.out_dim()
    }

    pub fn hidden(&self) -> usize {
        self.enc_q.out_dim()
    }

    /// The `NUM_VIEWS` fused vectors for each row of `(q, v)`, one n × d_f matrix per view.
    pub fn tokens(&self, q: &Mat, v: &Mat) -> Result<Vec<Mat>> {
        if q.nrows() != v.nrows() {
            return Err(BaselineError::InvalidInput(format!("{} q rows vs {} v rows", q.nrows(), v.nrows())));
        }
        let a = self.enc_q.apply(q)?;
        let b = self.enc_v.apply(v)?;
        let ab = &a * &b;
        let h = self.hidden();
        let first = &self.fusion.layers[0];
        let block = |i: usize| first.w.slice(ndarray::s![i * h..(i + 1) * h, ..]).to_owned();
        let pa = a.dot(&block(0));
        let pb = b.dot(&block(1));
        let pab = ab.dot(&block(2));
        let pfull = &(&pa + &pb) + &pab;
        let mut out = Vec::with_capacity(NUM_VIEWS);
        for pre in [pa, pb, pab, pfull] {
            let mut x = pre + &first.b;
            first.act.apply_inplace(&mut x);
            for l in &self.fusion.layers[1..] {
                x = x.dot(&l.w) + &l.b;
                l.act.apply_inplace(&mut x);
            }
            out.push(x);
        }
        Ok(out)
    }

    /// Mean of the fused vectors (n × d_f).
    pub fn pooled(&self, q: &Mat, v: &Mat) -> Result<Mat> {
        Ok(pool(&self.tokens(q, v)?))
    }

    pub fn bind(&self, g: &mut Graph) -> BoundBackbone {
        self.bound(g, false)
    }

    pub fn bind_frozen(&self, g: &mut Graph) -> BoundBackbone {
        self.bound(g, true)
    }

    fn bound(&self, g: &mut Graph, frozen: bool) -> BoundBackbone {
        let b = |m: &Mlp, g: &mut Graph| if frozen { m.bind_frozen(g) } else { m.bind(g) };
        BoundBackbone {
            enc_q: b(&self.enc_q, g),
            enc_v: b(&self.enc_v, g),
            fusion: b(&self.fusion, g),
            fusion_layers: self.fusion.layers.len(),
            hidden: self.hidden(),
        }
    }
}

/// `((t0 + t1) + t2 + …) · 1/T`, the same order as the graph version.
pub fn pool(tokens: &[Mat]) -> Mat {
    let mut acc = tokens[0].clone();
    for t in &tokens[1..] {
        acc = &acc + t;
    }
    acc * (1.0 / tokens.len() as f64)
}

impl BoundBackbone {
    pub fn tokens(&self, g: &mut Graph, q: NodeId, v: NodeId) -> Result<Vec<NodeId>> {
        let a = self.enc_q.forward(g, q)?;
        let b = self.enc_v.forward(g, v)?;
        let ab = g.mul(a, b)?;
        let (w1, b1, act1) = self.fusion.layer(0);
        let h = self.hidden;
        let wa = g.row_slice(w1, 0, h)?;
        let wb = g.row_slice(w1, h, h)?;
        let wab = g.row_slice(w1, 2 * h, h)?;
        let pa = g.matmul(a, wa)?;
        let pb = g.matmul(b, wb)?;
        let pab = g.matmul(ab, wab)?;
        let s = g.add(pa, pb)?;
        let pfull = g.add(s, pab)?;
        let mut out = Vec::with_capacity(NUM_VIEWS);
        for pre in [pa, pb, pab, pfull] {
            let z = g.add_bias(pre, b1)?;
            let mut x = act1.apply_graph(g, z);
            for i in 1..self.fusion_layers {
                let (w, b, act) = self.fusion.layer(i);
                let z = g.matmul(x, w)?;
                let z = g.add_bias(z, b)?;
                x = act.apply_graph(g, z);
            }
            out.push(x);
        }
        Ok(out)
    }

    pub fn pooled(&self, g: &mut Graph, q: NodeId, v: NodeId) -> Result<NodeId> {
        let tokens = self.tokens(g, q, v)?;
        let mut acc = tokens[0];
        for &t in &tokens[1..] {
            acc = g.add(acc, t)?;
        }
        Ok(g.scale(acc, 1.0 / tokens.len() as f64))
    }

    /// Leaf (or constant) nodes in [`Module::tensors`] order.
    pub fn param_nodes(&self) -> Vec<NodeId> {
        let mut out = self.enc_q.param_nodes();
        out.extend(self.enc_v.param_nodes());
        out.extend(self.fusion.param_nodes());
        out
    }
}

impl Module for Backbone {
    fn named_tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        for (prefix, m) in [("enc_q", &self.enc_q), ("enc_v", &self.enc_v), ("fusion", &self.fusion)] {
            out.extend(m.named_tensors().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = self.enc_q.tensors_mut();
        out.extend(self.enc_v.tensors_mut());
        out.extend(self.fusion.tensors_mut());
        out
    }
}
