//! The input-compression bound on the generalization gap.
//!
//! For a binary task trained on `n` points, a model whose representation Z
//! carries `I` bits of information about the input satisfies, with
//! probability 1 − δ,
//!
//! ```text
//! GE < sqrt((2^I + log(1/δ)) / (2 n))
//! ```
//!
//! With `I` supplied in nats the numerator's first term is `e^I` (identical
//! quantity, different unit), and `log(1/δ)` is the natural logarithm.

use crate::error::{Error, Result};

/// Confidence parameter for the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConfig {
    /// Failure probability δ ∈ (0,1). The bound holds with probability 1 − δ.
    pub delta: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig { delta: 0.05 }
    }
}

impl BoundConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0,1), got {delta}"
            )));
        }
        Ok(BoundConfig { delta })
    }
}

/// Convert an information quantity from nats to bits.
pub fn nats_to_bits(x: f64) -> f64 {
    x / std::f64::consts::LN_2
}

/// Convert an information quantity from bits to nats.
pub fn bits_to_nats(x: f64) -> f64 {
    x * std::f64::consts::LN_2
}

/// The bound value as a fraction of classification accuracy (0.25 = 25
/// percentage points of train/test gap). May exceed 1; never clamped.
pub fn icb(i_nats: f64, n_trn: usize, cfg: BoundConfig) -> Result<f64> {
    if n_trn < 1 {
        return Err(Error::InvalidConfig("n_trn must be >= 1".into()));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "delta must lie in (0,1), got {}",
            cfg.delta
        )));
    }
    Ok(((i_nats.exp() + (1.0 / cfg.delta).ln()) / (2.0 * n_trn as f64)).sqrt())
}

/// A binary-task bound above 0.5 exceeds the gap of a constant classifier
/// and carries no information.
pub fn vacuous(icb_fraction: f64) -> bool {
    icb_fraction >= 0.5
}
