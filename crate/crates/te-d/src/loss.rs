use crate::{Result, TeDError, TeDModel};
use infomath::rate_distortion_node;
use netcore::exact::common_grid;
use netcore::graph::{cosine_rows, softplus};
use netcore::{Graph, Mat, NodeId};

/// `softplus(s_neg − s_pos) = −log(e^{s_pos} / (e^{s_pos} + e^{s_neg}))`.
pub fn contrastive_from_similarities(s_pos: f64, s_neg: f64) -> f64 {
    softplus(s_neg - s_pos)
}

/// Mean over rows of the contrastive loss with `s_pos = cos(z_te, z_θ)` and `s_neg = cos(z_te, z_c)`.
pub fn contrastive_loss(z_te: &Mat, z_theta: &Mat, z_c: &Mat) -> Result<f64> {
    if z_te.shape() != z_theta.shape() || z_te.shape() != z_c.shape() || z_te.nrows() == 0 {
        return Err(TeDError::InvalidInput("contrastive loss needs three non-empty matrices of one shape".into()));
    }
    let pos = cosine_rows(z_te, z_theta);
    let neg = cosine_rows(z_te, z_c);
    let total: f64 = pos.iter().zip(neg.iter()).map(|(&p, &n)| contrastive_from_similarities(p, n)).sum();
    Ok(total / z_te.nrows() as f64)
}

/// Values substituted for the two stop-gradient nodes.
///
/// A finite-difference check perturbs every parameter, and a live
/// stop-gradient would follow the perturbation even though the analytic
/// gradient treats it as constant. Freezing both values at the base point
/// makes the two agree.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenStops {
    /// Raw pooled feature fed to the confounder encoder.
    pub z_theta: Mat,
    /// Grid-aligned confounder feature subtracted from `z_θ`.
    pub z_c: Mat,
}

/// Stop-gradient values of `model` on a batch.
pub fn frozen_stops(model: &TeDModel, q: &Mat, v: &Mat) -> Result<FrozenStops> {
    let raw = model.backbone.pooled(q, v)?;
    let f = model.features(q, v)?;
    Ok(FrozenStops { z_theta: raw, z_c: f.z_c })
}

/// Scalar loss terms of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub l_con: f64,
    pub l_ce: f64,
    pub l_ce_conf: f64,
    /// Rate-distortion of the batch's `Z_c`, in bits.
    pub r: f64,
    pub total: f64,
}

impl LossComponents {
    pub const NAMES: [&'static str; 5] = ["L_con", "L_ce", "L_ce_conf", "R", "total"];

    pub fn values(&self) -> [f64; 5] {
        [self.l_con, self.l_ce, self.l_ce_conf, self.r, self.total]
    }
}

/// Nodes of the joint loss on a tape.
#[derive(Debug, Clone)]
pub struct LossNodes {
    pub total: NodeId,
    pub l_con: NodeId,
    pub l_ce: NodeId,
    pub l_ce_conf: NodeId,
    pub r: NodeId,
    /// Every parameter leaf, in `Module::tensors` order.
    pub leaves: Vec<NodeId>,
    /// Leaves of the backbone only.
    pub backbone_leaves: Vec<NodeId>,
}

impl LossNodes {
    pub fn components(&self, g: &Graph) -> LossComponents {
        LossComponents {
            l_con: g.scalar(self.l_con),
            l_ce: g.scalar(self.l_ce),
            l_ce_conf: g.scalar(self.l_ce_conf),
            r: g.scalar(self.r),
            total: g.scalar(self.total),
        }
    }
}

/// Builds `L_con + L_ce + L_ce^conf + α·R(Z_c, ε)` for one batch.
pub fn te_d_loss_graph(
    g: &mut Graph,
    model: &TeDModel,
    q: &Mat,
    v: &Mat,
    labels: &[usize],
    frozen: Option<&FrozenStops>,
) -> Result<LossNodes> {
    let qn = g.constant(q.clone());
    let vn = g.constant(v.clone());
    let bb = model.backbone.bind(g);
    let conf_enc = model.conf_enc.bind(g);
    let conf_head = model.conf_head.bind(g);
    let main_head = model.main_head.bind(g);

    let z_raw = bb.pooled(g, qn, vn)?;
    let z_in = match frozen {
        Some(f) => g.constant(f.z_theta.clone()),
        None => g.stop_gradient(z_raw),
    };
    let zc_raw = conf_enc.forward(g, z_in)?;
    let grid = common_grid(g.value(z_raw), g.value(zc_raw));
    let z_theta = g.snap(z_raw, &grid)?;
    let z_c = g.snap(zc_raw, &grid)?;
    let z_c_stop = match frozen {
        Some(f) => g.constant(f.z_c.clone()),
        None => g.stop_gradient(z_c),
    };
    let z_te = g.sub(z_theta, z_c_stop)?;

    let s_pos = g.cosine_rows(z_te, z_theta)?;
    let s_neg = g.cosine_rows(z_te, z_c_stop)?;
    let gap = g.sub(s_neg, s_pos)?;
    let sp = g.softplus(gap);
    let l_con = g.mean(sp);

    let main_logits = main_head.forward(g, z_te)?;
    let l_ce = g.softmax_cross_entropy(main_logits, labels)?;
    let conf_logits = conf_head.forward(g, z_c)?;
    let l_ce_conf = g.softmax_cross_entropy(conf_logits, labels)?;
    let r = rate_distortion_node(g, z_c, model.eps).map_err(|e| TeDError::Diverged(format!("R: {e}")))?;

    let ar = g.scale(r, model.alpha);
    let t1 = g.add(l_con, l_ce)?;
    let t2 = g.add(t1, l_ce_conf)?;
    let total = g.add(t2, ar)?;

    for (name, id) in [("L_con", l_con), ("L_ce", l_ce), ("L_ce_conf", l_ce_conf), ("R", r), ("total", total)] {
        let x = g.scalar(id);
        if !x.is_finite() {
            return Err(TeDError::Diverged(format!("{name} is {x}")));
        }
    }

    let backbone_leaves = bb.param_nodes();
    let mut leaves = backbone_leaves.clone();
    leaves.extend(conf_enc.param_nodes());
    leaves.extend(conf_head.param_nodes());
    leaves.extend(main_head.param_nodes());
    Ok(LossNodes { total, l_con, l_ce, l_ce_conf, r, leaves, backbone_leaves })
}

/// Loss components of `model` on one batch, without gradients.
pub fn te_d_loss(model: &TeDModel, q: &Mat, v: &Mat, labels: &[usize]) -> Result<LossComponents> {
    let mut g = Graph::new();
    let nodes = te_d_loss_graph(&mut g, model, q, v, labels, None)?;
    Ok(nodes.components(&g))
}
