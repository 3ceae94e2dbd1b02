use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Label, LabeledExample};
use crate::sampling::DocPool;

use super::HarnessError;

pub const STARTING_POSITIVES: usize = 3;

/// Random-sample sizes up to 80,000, before the 20,000-step tail.
const HEAD_SIZES: [usize; 23] = [
    3, 6, 10, 20, 40, 80, 160, 320, 640, 1000, 2500, 4000, 6000, 8000, 10000, 15000, 20000, 30000,
    40000, 50000, 60000, 70000, 80000,
];

/// Sizes of the nested random samples, clipped to `pool_size`. The last
/// entry is always the whole pool.
pub fn random_size_schedule(pool_size: usize) -> Vec<usize> {
    let tail = (100_000..=300_000).step_by(20_000);
    let mut sizes: Vec<usize> = HEAD_SIZES
        .iter()
        .copied()
        .chain(tail)
        .map(|n| n.min(pool_size))
        .collect();
    sizes.push(pool_size);
    sizes.dedup();
    sizes.retain(|&n| n > 0);
    sizes
}

#[derive(Clone, Debug, PartialEq)]
pub struct StartingSubsample {
    pub examples: Vec<LabeledExample>,
    /// Every word of the starting examples; always kept as a feature.
    pub required: BTreeSet<String>,
}

/// Draws three distinct positives uniformly from `positives` (pool
/// indices). The result depends only on the seed and the order of
/// `positives`.
pub fn draw_starting_subsample(
    pool: &DocPool,
    positives: &[usize],
    seed: u64,
) -> Result<StartingSubsample, HarnessError> {
    if positives.len() < STARTING_POSITIVES {
        return Err(HarnessError::TooFewPositives {
            category: String::new(),
            found: positives.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = index::sample(&mut rng, positives.len(), STARTING_POSITIVES).into_vec();
    picks.sort_unstable();
    let examples: Vec<LabeledExample> = picks
        .into_iter()
        .map(|k| {
            let doc = pool.doc(positives[k]);
            LabeledExample::new(doc.doc_id.clone(), doc.tokens.clone(), Label::Positive)
        })
        .collect();
    let required = examples.iter().flat_map(|e| e.tokens.iter().cloned()).collect();
    Ok(StartingSubsample { examples, required })
}
