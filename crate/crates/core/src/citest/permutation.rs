use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Permutation p-value `(1 + #{permuted >= observed}) / (B + 1)`.
///
/// `stat_fn` receives a seeded random permutation of `0..n` per draw.
pub fn permutation_p_value<F>(observed: f64, n: usize, permutations: usize, seed: u64, mut stat_fn: F) -> Result<f64>
where
    F: FnMut(&[usize]) -> f64,
{
    if permutations < 20 {
        return Err(Error::InvalidArgument(format!(
            "need at least 20 permutations, got {permutations}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut exceed = 0usize;
    for _ in 0..permutations {
        perm.shuffle(&mut rng);
        if stat_fn(&perm) >= observed {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (permutations + 1) as f64)
}

/// Shuffle test of `stat_fn(series)` against `stat_fn(shuffled series)`.
pub fn shuffle_significance<F>(mut stat_fn: F, series: &[f64], permutations: usize, seed: u64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let observed = stat_fn(series);
    let mut buf = vec![0.0; series.len()];
    permutation_p_value(observed, series.len(), permutations, seed, |perm| {
        for (dst, &i) in buf.iter_mut().zip(perm) {
            *dst = series[i];
        }
        stat_fn(&buf)
    })
}
