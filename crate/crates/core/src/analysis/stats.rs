//! Distances, goodness-of-fit and sharded Monte Carlo.

use std::collections::BTreeMap;

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Trials per Monte Carlo shard. Each shard owns one RNG stream, so results
/// depend only on `(seed, stream_base, trials)`, never on thread count.
pub const SHARD_SIZE: usize = 4096;

/// `½ Σ |a_i - b_i|` over aligned laws.
pub fn tv_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SupportMismatch(format!("lengths {} and {}", a.len(), b.len())));
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Total variation between laws keyed by outcome; missing keys have mass 0.
pub fn tv_distance_maps<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, x) in a {
        sum += (x - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, y) in b {
        if !a.contains_key(k) {
            sum += y.abs();
        }
    }
    0.5 * sum
}

/// Pearson chi-square goodness of fit; returns the upper-tail p-value with
/// `len - 1` degrees of freedom.
pub fn chi_square_test(counts: &[u64], expected: &[f64]) -> Result<f64> {
    if counts.len() != expected.len() || counts.len() < 2 {
        return Err(Error::SupportMismatch(format!(
            "{} counts vs {} expected cells",
            counts.len(),
            expected.len()
        )));
    }
    if let Some(e) = expected.iter().find(|&&e| e.is_nan() || e <= 0.0) {
        return Err(Error::SupportMismatch(format!("expected count {e} is not positive")));
    }
    let stat: f64 = counts
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("positive degrees of freedom");
    Ok(dist.sf(stat))
}

/// Normalize counts into frequencies.
pub fn empirical_law(counts: &[u64]) -> Vec<f64> {
    let n: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect()
}

/// Normalize keyed counts into frequencies.
pub fn empirical_law_map<K: Ord + Clone>(counts: &BTreeMap<K, u64>) -> BTreeMap<K, f64> {
    let n: u64 = counts.values().sum();
    counts
        .iter()
        .map(|(k, &c)| (k.clone(), c as f64 / n.max(1) as f64))
        .collect()
}

/// Run `trials` independent trials in parallel shards; shard `s` draws from
/// `RngStream::new(seed, stream_base + s)`. Results come back in trial order.
pub fn sharded_trials<T, F>(seed: u64, stream_base: u64, trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream) -> T + Sync,
{
    let shards = trials.div_ceil(SHARD_SIZE);
    (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = RngStream::new(seed, stream_base.wrapping_add(s as u64));
            let n = SHARD_SIZE.min(trials - s * SHARD_SIZE);
            (0..n).map(|_| f(&mut rng)).collect::<Vec<T>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Histogram of `sharded_trials` outcomes over `0..bins`.
pub fn sharded_counts<F>(seed: u64, stream_base: u64, trials: usize, bins: usize, f: F) -> Vec<u64>
where
    F: Fn(&mut RngStream) -> usize + Sync,
{
    let mut counts = vec![0u64; bins];
    for x in sharded_trials(seed, stream_base, trials, f) {
        counts[x] += 1;
    }
    counts
}
