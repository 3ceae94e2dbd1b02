use sha2::{Digest, Sha256};

/// Derives an independent 64-bit seed from a master seed and a path of
/// labels, e.g. `["bonds", "uncertainty", "3"]`.
///
/// Each label is length-prefixed before hashing, so `["ab", "c"]` and
/// `["a", "bc"]` give different seeds.
pub fn derive_seed(master: u64, path: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for part in path {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn run_seed(master: u64, category: &str, strategy: &str, run: usize) -> u64 {
    derive_seed(master, &[category, strategy, &run.to_string()])
}

pub fn start_seed(master: u64, category: &str, start: usize) -> u64 {
    derive_seed(master, &[category, "start", &start.to_string()])
}

pub fn split_seed(master: u64) -> u64 {
    derive_seed(master, &["split"])
}
