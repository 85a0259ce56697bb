//! Deterministic seed derivation for parallel data generation.
//!
//! Every randomized sub-task (a base load condition, a single profile draw, a
//! noise realization, ...) derives its own RNG seed from the root seed plus a
//! small tuple of tags. Generation order and thread scheduling therefore never
//! influence the output.

/// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a sequence of tag words.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    let mut acc = mix(root);
    for &t in tags {
        acc = mix(acc ^ mix(t));
    }
    acc
}

/// Role tags used by the dataset generator.
pub mod role {
    pub const BASE_CONDITION: u64 = 1;
    pub const PROFILE: u64 = 2;
    pub const NOISE_NORMAL: u64 = 3;
    pub const NOISE_ATTACK: u64 = 4;
    pub const ATTACK_CHOICE: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const SCENARIO: u64 = 7;
    pub const TRIAL: u64 = 8;
    pub const MODEL_INIT: u64 = 9;
    pub const BATCH: u64 = 10;
    pub const REPLAY: u64 = 11;
    pub const SUBSAMPLE: u64 = 12;
}
