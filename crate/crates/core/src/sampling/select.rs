//! Batch selection rules.
//!
//! Every rule is deterministic: equal posteriors are ordered by key
//! ascending.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SamplingError;

/// Picks up to `k` items that are smallest under `cmp`, returned in order.
fn smallest_k<T, F>(mut items: Vec<T>, k: usize, cmp: F) -> Vec<T>
where
    F: Fn(&T, &T) -> Ordering,
{
    if k == 0 {
        return Vec::new();
    }
    if items.len() > k {
        items.select_nth_unstable_by(k - 1, &cmp);
        items.truncate(k);
    }
    items.sort_by(cmp);
    items
}

/// Uncertainty sampling with a balanced batch: the `b/2` documents closest to
/// 0.5 from above (p >= 0.5) and the `b/2` closest from below (p < 0.5).
///
/// If one side runs short the other side makes up the difference. The
/// above-side picks come first in the result, each side ordered by distance
/// from 0.5.
pub fn select_uncertain<K: Ord + Clone>(
    posteriors: &[(K, f64)],
    b: usize,
) -> Result<Vec<K>, SamplingError> {
    if b == 0 || b % 2 != 0 {
        return Err(SamplingError::InvalidBatchSize(b));
    }
    let half = b / 2;
    let (above, below): (Vec<_>, Vec<_>) = posteriors.iter().partition(|(_, p)| *p >= 0.5);

    // Closest from above = smallest p; from below = largest p.
    let by_above = |x: &&(K, f64), y: &&(K, f64)| x.1.total_cmp(&y.1).then_with(|| x.0.cmp(&y.0));
    let by_below = |x: &&(K, f64), y: &&(K, f64)| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0));

    let take_above = half.max(b.saturating_sub(below.len())).min(above.len());
    let take_below = (b - take_above).min(below.len());

    let mut out: Vec<K> = smallest_k(above, take_above, by_above)
        .into_iter()
        .map(|(k, _)| k.clone())
        .collect();
    out.extend(
        smallest_k(below, take_below, by_below)
            .into_iter()
            .map(|(k, _)| k.clone()),
    );
    Ok(out)
}

/// Relevance sampling: the `b` documents with the highest posterior.
pub fn select_relevant<K: Ord + Clone>(posteriors: &[(K, f64)], b: usize) -> Vec<K> {
    let items: Vec<&(K, f64)> = posteriors.iter().collect();
    smallest_k(items, b, |x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)))
        .into_iter()
        .map(|(k, _)| k.clone())
        .collect()
}

/// A seeded permutation of `pool`. Prefixes of it are the nested random
/// samples returned by [`select_random`].
pub fn random_permutation<K: Clone>(pool: &[K], seed: u64) -> Vec<K> {
    let mut order = pool.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// `n` documents drawn uniformly without replacement. For a fixed seed a
/// smaller sample is always a prefix of a larger one.
pub fn select_random<K: Clone>(pool: &[K], n: usize, seed: u64) -> Result<Vec<K>, SamplingError> {
    if n > pool.len() {
        return Err(SamplingError::SampleTooLarge {
            requested: n,
            available: pool.len(),
        });
    }
    let mut order = random_permutation(pool, seed);
    order.truncate(n);
    Ok(order)
}
