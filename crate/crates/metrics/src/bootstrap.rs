use crate::{MetricsError, Result};
use netcore::seeded_rng;
use rand::Rng as _;

/// Resamples drawn from one derived generator. Chunk `c` always uses the
/// same stream, so splitting chunks across workers cannot change the result.
pub const BOOTSTRAP_CHUNK: usize = 1000;

fn chunk_seed(seed: u64, chunk: u64) -> u64 {
    seed ^ chunk.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Paired bootstrap p-value for "a is not better than b".
///
/// Sample indices are resampled jointly for both correctness vectors, and
/// `p` is the fraction of resamples with `mean(a) <= mean(b)`.
pub fn bootstrap_significance(correct_a: &[u8], correct_b: &[u8], resamples: usize, seed: u64) -> Result<f64> {
    if correct_a.len() != correct_b.len() {
        return Err(MetricsError::InvalidInput(format!(
            "bootstrap: vectors of length {} and {}",
            correct_a.len(),
            correct_b.len()
        )));
    }
    if correct_a.is_empty() {
        return Err(MetricsError::InvalidInput("bootstrap: empty vectors".into()));
    }
    if resamples < 1000 {
        return Err(MetricsError::InvalidInput(format!("bootstrap: resamples must be >= 1000, got {resamples}")));
    }
    if correct_a.iter().chain(correct_b).any(|&x| x > 1) {
        return Err(MetricsError::InvalidInput("bootstrap: correctness values must be 0 or 1".into()));
    }
    // Sorted, so permuting both vectors identically yields the same p exactly.
    let mut diff: Vec<i64> = correct_a.iter().zip(correct_b).map(|(&a, &b)| i64::from(a) - i64::from(b)).collect();
    diff.sort_unstable();
    let n = diff.len();
    let mut not_better = 0usize;
    let mut done = 0usize;
    let mut chunk = 0u64;
    while done < resamples {
        let count = BOOTSTRAP_CHUNK.min(resamples - done);
        let mut rng = seeded_rng(chunk_seed(seed, chunk));
        for _ in 0..count {
            let mut s = 0i64;
            for _ in 0..n {
                s += diff[rng.random_range(0..n)];
            }
            if s <= 0 {
                not_better += 1;
            }
        }
        done += count;
        chunk += 1;
    }
    Ok(not_better as f64 / resamples as f64)
}
