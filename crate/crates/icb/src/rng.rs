//! Deterministic seed derivation.
//!
//! Every stochastic operation takes an explicit 64-bit seed. Sweep code
//! derives per-trial seeds by mixing (master_seed, trial_index, purpose), so
//! results never depend on scheduling or worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for. Each purpose gets an independent
/// stream even for the same (master, index) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Drawing train/test indices for a task split.
    TaskSplit,
    /// Sampling metaparameters of a trial.
    NetSample,
    /// Replacing training labels with random ones.
    LabelRandomize,
    /// Gaussian input noise for robustness evaluation.
    Awgn,
    /// Monte-Carlo draws inside the mutual-information estimators.
    MiDraws,
    /// Synthetic dataset generation.
    Synth,
    /// Finite-width simulation (test oracles).
    WidthOracle,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::TaskSplit => 0x5441_534b_5350_4c54,
            Purpose::NetSample => 0x4e45_545f_5341_4d50,
            Purpose::LabelRandomize => 0x4c41_4245_4c52_4e44,
            Purpose::Awgn => 0x4157_474e_5f5f_5f5f,
            Purpose::MiDraws => 0x4d49_4452_4157_535f,
            Purpose::Synth => 0x5359_4e54_485f_5f5f,
            Purpose::WidthOracle => 0x5749_4454_484f_5243,
        }
    }
}

/// SplitMix64 finalizer: a bijective avalanche mix on 64 bits.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine an accumulated seed with one more word.
#[inline]
pub fn mix_in(seed: u64, word: u64) -> u64 {
    mix64(seed ^ word.rotate_left(17) ^ 0x9e37_79b1_85eb_ca87)
}

/// Counter-based seed for (master, trial_index, purpose).
pub fn derive_seed(master: u64, trial_index: u64, purpose: Purpose) -> u64 {
    mix_in(mix_in(mix64(master), trial_index), purpose.tag())
}

/// Deterministic RNG from a derived seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
