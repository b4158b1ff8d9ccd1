//! Numerical primitives for information minimization: the rate-distortion
//! coding length of a feature matrix, KL divergence from the uniform
//! distribution, Shannon entropy and cosine similarity.
//!
//! Rate-distortion is evaluated on the differentiation tape, so the same code
//! path provides both values and gradients.

use ndarray::Array2;
use netcore::{Graph, Mat, NetError, NodeId};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("log-determinant failed: matrix not positive definite (condition estimate {condition:.3e})")]
    Numerical { condition: f64 },
}

impl From<NetError> for InfoError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::NotPositiveDefinite { condition } => InfoError::Numerical { condition },
            other => InfoError::InvalidInput(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, InfoError>;

/// An n×d matrix of finite feature vectors (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Mat,
}

impl FeatureMatrix {
    pub fn new(data: Mat) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(InfoError::InvalidInput(format!("feature matrix must be non-empty, got {:?}", data.shape())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(InfoError::InvalidInput("feature matrix has non-finite entries".into()));
        }
        Ok(FeatureMatrix { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(InfoError::InvalidInput("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((n, d), flat).map_err(|e| InfoError::InvalidInput(e.to_string()))?;
        Self::new(data)
    }

    pub fn data(&self) -> &Mat {
        &self.data
    }

    pub fn into_inner(self) -> Mat {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }
}

/// A probability vector over k classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(InfoError::InvalidInput("distribution over zero classes".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(InfoError::InvalidInput("probabilities must be finite and non-negative".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(InfoError::InvalidInput(format!("probabilities sum to {s}, not 1")));
        }
        Ok(Distribution { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(InfoError::InvalidInput("uniform over zero classes".into()));
        }
        Ok(Distribution { probs: vec![1.0 / k as f64; k] })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// The scale `d / (n·eps²)` applied to the Gram matrix.
fn rate_scale(n: usize, d: usize, eps: f64) -> f64 {
    d as f64 / (n as f64 * eps * eps)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(InfoError::InvalidInput(format!("eps must be positive and finite, got {eps}")));
    }
    Ok(())
}

/// Records `½·log₂ det(I + d/(n·eps²)·G)` on the tape, with `G = Z Zᵀ` when
/// `outer` and `G = Zᵀ Z` otherwise. Both forms have the same value.
pub fn rate_distortion_node_with(g: &mut Graph, z: NodeId, eps: f64, outer: bool) -> Result<NodeId> {
    check_eps(eps)?;
    let (n, d) = g.value(z).dim();
    if n == 0 || d == 0 {
        return Err(InfoError::InvalidInput("rate-distortion of an empty matrix".into()));
    }
    if g.value(z).iter().any(|v| !v.is_finite()) {
        return Err(InfoError::InvalidInput("rate-distortion input has non-finite entries".into()));
    }
    let gram = g.gram(z, outer);
    let a = g.add_scaled_identity(gram, rate_scale(n, d, eps))?;
    let ld = g.logdet_spd(a)?;
    Ok(g.scale(ld, 0.5 / std::f64::consts::LN_2))
}

/// Rate-distortion of the rows of `z` on the tape, using the smaller Gram matrix.
pub fn rate_distortion_node(g: &mut Graph, z: NodeId, eps: f64) -> Result<NodeId> {
    let (n, d) = g.value(z).dim();
    rate_distortion_node_with(g, z, eps, n <= d)
}

/// Coding length in bits per vector: `½·log₂ det(I + d/(n·eps²)·Z Zᵀ)`.
pub fn rate_distortion(z: &FeatureMatrix, eps: f64) -> Result<f64> {
    let mut g = Graph::new();
    let id = g.constant(z.data.clone());
    let r = rate_distortion_node(&mut g, id, eps)?;
    Ok(g.scalar(r))
}

/// Rate-distortion through an explicit Gram form (`outer` selects the n×n form).
pub fn rate_distortion_gram(z: &FeatureMatrix, eps: f64, outer: bool) -> Result<f64> {
    let mut g = Graph::new();
    let id = g.constant(z.data.clone());
    let r = rate_distortion_node_with(&mut g, id, eps, outer)?;
    Ok(g.scalar(r))
}

/// `Σ pᵢ·ln(pᵢ·k)`, with `0·ln 0 = 0`. Requires k ≥ 2.
pub fn kl_from_uniform(p: &Distribution) -> Result<f64> {
    let k = p.k();
    if k < 2 {
        return Err(InfoError::InvalidInput("KL from uniform needs at least 2 classes".into()));
    }
    Ok(p.probs.iter().filter(|&&x| x > 0.0).map(|&x| x * (x * k as f64).ln()).sum())
}

/// Shannon entropy in nats, with `0·ln 0 = 0`.
pub fn entropy(p: &Distribution) -> Result<f64> {
    // `0.0 - s` rather than `-s`, so a point mass gives +0.0.
    Ok(0.0 - p.probs.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>())
}

/// `a·b / (‖a‖‖b‖)`, or 0 when either vector has zero norm.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(InfoError::InvalidInput(format!("dimension mismatch {} vs {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(InfoError::InvalidInput("cosine_sim of non-finite vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
