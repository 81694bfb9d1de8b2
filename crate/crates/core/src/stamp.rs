//! Identification embedded in every written artifact.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    /// `git describe`-style build id.
    pub build: String,
    /// Hex digest of the canonical configuration JSON.
    pub config_hash: String,
    pub seed: u64,
    /// Budget multiplier the run was scaled by.
    pub scale: f64,
}

impl Stamp {
    /// `key=value` pairs separated by spaces.
    pub fn fields(&self) -> String {
        format!(
            "build={} config_hash={} seed={} scale={}",
            self.build, self.config_hash, self.seed, self.scale
        )
    }

    /// Single comment line for CSV-like artifacts.
    pub fn comment(&self) -> String {
        format!("# {}", self.fields())
    }
}

/// SplitMix64 finalizer; decorrelates nearby integers.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for a path of indices under `base`.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}
