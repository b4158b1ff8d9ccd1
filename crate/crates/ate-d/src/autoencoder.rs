use crate::{AteError, Result};
use infomath::FeatureMatrix;
use ndarray::Axis;
use netcore::{fit, seeded_rng, Activation, Graph, Mat, Mlp, Module, NodeId, TrainConfig};

/// Shape and schedule of the substitute-confounder autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderConfig {
    /// Width of the single hidden layer on each side.
    pub hidden: usize,
    /// `latent_dim = d_f / latent_factor`.
    pub latent_factor: usize,
    pub train: TrainConfig,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            hidden: 16,
            latent_factor: 4,
            train: TrainConfig { epochs: 5, batch_size: 256, ..TrainConfig::default() },
        }
    }
}

impl AutoencoderConfig {
    pub fn latent_dim(&self, d_f: usize) -> Result<usize> {
        if self.latent_factor < 2 || d_f % self.latent_factor != 0 {
            return Err(AteError::InvalidInput(format!(
                "latent_factor must be >= 2 and divide d_f = {d_f}, got {}",
                self.latent_factor
            )));
        }
        Ok(d_f / self.latent_factor)
    }
}

/// `F_enc` and `F_dec`. The default encoder ends in a sigmoid, so latent codes
/// lie in the open unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub enc: Mlp,
    pub dec: Mlp,
}

impl Autoencoder {
    /// Default architecture: d_f → hidden (tanh) → latent (sigmoid) → hidden (tanh) → d_f.
    pub fn new(d_f: usize, cfg: &AutoencoderConfig, seed: u64) -> Result<Self> {
        let lat = cfg.latent_dim(d_f)?;
        let mut rng = seeded_rng(seed);
        let enc = Mlp::new(&[d_f, cfg.hidden, lat], &[Activation::Tanh, Activation::Sigmoid], &mut rng)?;
        let dec = Mlp::new(&[lat, cfg.hidden, d_f], &[Activation::Tanh, Activation::Identity], &mut rng)?;
        Self::from_parts(enc, dec)
    }

    /// Any encoder/decoder pair whose widths compose to an identity-shaped map.
    pub fn from_parts(enc: Mlp, dec: Mlp) -> Result<Self> {
        if enc.out_dim() != dec.in_dim() || dec.out_dim() != enc.in_dim() {
            return Err(AteError::InvalidInput(format!(
                "autoencoder widths do not compose: enc {}→{}, dec {}→{}",
                enc.in_dim(),
                enc.out_dim(),
                dec.in_dim(),
                dec.out_dim()
            )));
        }
        Ok(Autoencoder { enc, dec })
    }

    pub fn input_dim(&self) -> usize {
        self.enc.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.enc.out_dim()
    }

    pub fn encode(&self, x: &Mat) -> Result<Mat> {
        Ok(self.enc.apply(x)?)
    }

    pub fn reconstruct(&self, x: &Mat) -> Result<Mat> {
        Ok(self.dec.apply(&self.enc.apply(x)?)?)
    }

    /// Mean over rows of ‖r − F_dec(F_enc(r))‖².
    pub fn reconstruction_loss(&self, x: &Mat) -> Result<f64> {
        let diff = self.reconstruct(x)? - x;
        Ok(diff.iter().map(|d| d * d).sum::<f64>() / x.nrows() as f64)
    }

    /// Reconstruction loss on the tape; returns `(loss, leaves)`.
    pub fn loss_graph(&self, g: &mut Graph, x: NodeId) -> Result<(NodeId, Vec<NodeId>)> {
        let enc = self.enc.bind(g);
        let dec = self.dec.bind(g);
        let z = enc.forward(g, x)?;
        let r = dec.forward(g, z)?;
        let d = g.sub(r, x)?;
        let loss = g.mean_sq_row_norm(d);
        let mut leaves = enc.param_nodes();
        leaves.extend(dec.param_nodes());
        Ok((loss, leaves))
    }
}

impl Module for Autoencoder {
    fn named_tensors(&self) -> Vec<(String, &Mat)> {
        let mut out: Vec<(String, &Mat)> =
            self.enc.named_tensors().into_iter().map(|(n, t)| (format!("enc.{n}"), t)).collect();
        out.extend(self.dec.named_tensors().into_iter().map(|(n, t)| (format!("dec.{n}"), t)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = self.enc.tensors_mut();
        out.extend(self.dec.tensors_mut());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// Fits `ae` to `features` by minimizing the mean squared reconstruction error.
pub fn train_autoencoder(
    mut ae: Autoencoder,
    features: &FeatureMatrix,
    cfg: &TrainConfig,
) -> Result<(Autoencoder, AutoencoderReport)> {
    let x = features.data();
    if x.ncols() != ae.input_dim() {
        return Err(AteError::InvalidInput(format!(
            "features have {} columns, autoencoder expects {}",
            x.ncols(),
            ae.input_dim()
        )));
    }
    let initial_loss = ae.reconstruction_loss(x)?;
    let epoch_losses = fit(&mut ae, x.nrows(), cfg, |g, m, idx| {
        let xb = g.constant(x.select(Axis(0), idx));
        m.loss_graph(g, xb).map_err(|e| netcore::NetError::InvalidInput(e.to_string()))
    })?;
    let final_loss = ae.reconstruction_loss(x)?;
    if !final_loss.is_finite() {
        return Err(AteError::Diverged(format!("final reconstruction loss {final_loss}")));
    }
    Ok((ae, AutoencoderReport { initial_loss, final_loss, epoch_losses }))
}
