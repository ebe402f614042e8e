//! Deterministic seed derivation.
//!
//! All randomness in the crate flows from one master seed. Independent
//! sub-streams are addressed by a path of stream tags and derived with
//! SplitMix64, so e.g. node positions and per-node noise features come from
//! unrelated streams of the same master seed and the same node layout can
//! carry different signals. Identical `(master, path)` always yields the
//! identical generator, on every platform.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Stream tags used by the crate. Keeping them in one place documents the
/// derivation layout and keeps streams collision-free.
pub mod stream {
    /// Node positions of a sampled graph.
    pub const NODES: u64 = 0x01;
    /// Per-node noise features.
    pub const FEATURES: u64 = 0x02;
    /// Network weight initialization.
    pub const NET: u64 = 0x03;
    /// Subset selection when subsampling a graph.
    pub const SUBSAMPLE: u64 = 0x04;
    /// Monte-Carlo quadrature nodes.
    pub const QUAD: u64 = 0x05;
    /// Signal-internal randomness (bandlimited coefficients).
    pub const SIGNAL: u64 = 0x06;
    /// Per-trial branch of an experiment.
    pub const TRIAL: u64 = 0x07;
    /// Training-set redraws in the generalization experiment.
    pub const TRAINING: u64 = 0x08;
    /// Monte-Carlo estimation of the statistical risk.
    pub const RISK: u64 = 0x09;
}

/// SplitMix64 output function; the standard finalizer with full avalanche.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a sub-seed by folding the path into the master seed, one
/// SplitMix64 round per path element.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

/// The crate-wide generator: ChaCha with 8 rounds, seeded from a derived
/// sub-seed. ChaCha streams are reproducible across platforms and rand
/// versions, which is what pins bit-identical experiment re-runs.
pub fn chacha(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;

    #[test]
    fn derivation_is_deterministic_and_path_sensitive() {
        assert_eq!(derive_seed(7, &[stream::NODES]), derive_seed(7, &[stream::NODES]));
        assert_ne!(derive_seed(7, &[stream::NODES]), derive_seed(7, &[stream::FEATURES]));
        assert_ne!(derive_seed(7, &[stream::NODES]), derive_seed(8, &[stream::NODES]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[]), derive_seed(7, &[0]));
    }

    #[test]
    fn generators_with_equal_paths_agree() {
        let mut a = chacha(42, &[stream::TRIAL, 3]);
        let mut b = chacha(42, &[stream::TRIAL, 3]);
        for _ in 0..32 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }
}
