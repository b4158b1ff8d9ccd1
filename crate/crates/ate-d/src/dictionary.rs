use crate::{AteError, Autoencoder, Result};
use infomath::{cosine_sim, FeatureMatrix};
use netcore::{seeded_rng, Mat};
use rand::Rng as _;
use std::collections::HashSet;

pub const KMEANS_MAX_ITERS: usize = 100;
/// Convergence threshold on the total (Frobenius) movement of the centroids.
pub const KMEANS_TOL: f64 = 1e-6;

/// `K` centroids in the autoencoder's latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfounderDictionary {
    centroids: Mat,
}

impl ConfounderDictionary {
    pub fn new(centroids: Mat) -> Result<Self> {
        if centroids.nrows() == 0 || centroids.ncols() == 0 {
            return Err(AteError::InvalidInput("dictionary needs at least one non-empty centroid".into()));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(AteError::InvalidInput("dictionary has non-finite centroid entries".into()));
        }
        Ok(ConfounderDictionary { centroids })
    }

    pub fn centroids(&self) -> &Mat {
        &self.centroids
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.centroids.ncols()
    }
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means over `points` with seeded farthest-point initialization.
///
/// The first center is a seeded random point; each further center is the
/// point farthest from the centers chosen so far. Lloyd iterations then run
/// until the centroids move less than [`KMEANS_TOL`] or [`KMEANS_MAX_ITERS`]
/// is reached. A cluster that loses all its points keeps its old center.
pub fn kmeans(points: &Mat, k: usize, seed: u64) -> Result<Mat> {
    let n = points.nrows();
    if k == 0 {
        return Err(AteError::InvalidInput("dictionary size K must be >= 1".into()));
    }
    let distinct: HashSet<Vec<u64>> = points.rows().into_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
    if k > distinct.len() {
        return Err(AteError::InvalidInput(format!(
            "dictionary size K = {k} exceeds the {} distinct encoded points",
            distinct.len()
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut centers = Mat::zeros((k, points.ncols()));
    centers.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, centers.row(0))).collect();
    for c in 1..k {
        let mut far = 0;
        for i in 1..n {
            if nearest[i] > nearest[far] {
                far = i;
            }
        }
        centers.row_mut(c).assign(&points.row(far));
        for (i, p) in points.rows().into_iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, centers.row(c)));
        }
    }

    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = Mat::zeros(centers.raw_dim());
        let mut counts = vec![0usize; k];
        for p in points.rows() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.rows().into_iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            counts[best] += 1;
            let mut row = sums.row_mut(best);
            row += &p;
        }
        let mut next = centers.clone();
        for j in 0..k {
            if counts[j] > 0 {
                let mean = &sums.row(j) / counts[j] as f64;
                next.row_mut(j).assign(&mean);
            }
        }
        let moved = (&next - &centers).iter().map(|d| d * d).sum::<f64>().sqrt();
        centers = next;
        if moved < KMEANS_TOL {
            break;
        }
    }
    Ok(centers)
}

/// Encodes `features` with `ae` and clusters the codes into `k` centroids.
pub fn build_dictionary(ae: &Autoencoder, features: &FeatureMatrix, k: usize, seed: u64) -> Result<ConfounderDictionary> {
    let latent = ae.encode(features.data())?;
    ConfounderDictionary::new(kmeans(&latent, k, seed)?)
}

/// `wᵢ = 1 − (1/K)·Σⱼ cos(latentᵢ, cⱼ)` for each row of `latent`, in [0, 2].
pub fn recalibration_weights(latent: &Mat, dict: &ConfounderDictionary) -> Result<Vec<f64>> {
    if latent.ncols() != dict.latent_dim() {
        return Err(AteError::InvalidInput(format!(
            "latent width {} differs from dictionary width {}",
            latent.ncols(),
            dict.latent_dim()
        )));
    }
    let k = dict.k() as f64;
    latent
        .rows()
        .into_iter()
        .map(|l| {
            let l = l.to_vec();
            let mut s = 0.0;
            for c in dict.centroids().rows() {
                s += cosine_sim(&l, &c.to_vec())?;
            }
            Ok((1.0 - s / k).clamp(0.0, 2.0))
        })
        .collect()
}

/// Scales each fused vector `rᵢ` of `r_seq` by its weight `wᵢ`.
pub fn recalibrate(r_seq: &FeatureMatrix, ae: &Autoencoder, dict: &ConfounderDictionary) -> Result<FeatureMatrix> {
    let w = recalibration_weights(&ae.encode(r_seq.data())?, dict)?;
    let mut out = r_seq.data().clone();
    for (mut row, wi) in out.rows_mut().into_iter().zip(w) {
        row *= wi;
    }
    Ok(FeatureMatrix::new(out)?)
}
